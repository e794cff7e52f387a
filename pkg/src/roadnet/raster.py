"""
Tile and raster primitives: slippy-map tile coordinates, RGB tiles, binary
canvases and Web-Mercator georeferencing.

Pixel coordinates passed to :func:`pixel_to_geo` are continuous, with (0, 0)
at the top-left corner of the canvas. The center of pixel ``(col, row)`` is
therefore ``(col + 0.5, row + 0.5)``; use :func:`pixel_center_to_geo` for that.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

logger = logging.getLogger(__name__)

TILE_SIZE = 256
MAX_LAT = math.degrees(math.atan(math.sinh(math.pi)))  # 85.0511287798...


class RasterError(ValueError):
    """Invalid tile, canvas or georeferencing input."""


class PixelBoundsError(RasterError):
    """Pixel coordinate outside the canvas."""


@dataclass(frozen=True, order=True)
class TileCoord:
    x: int
    y: int
    z: int

    def __post_init__(self):
        if self.z < 0:
            raise RasterError(f"zoom must be non-negative, got {self.z}")
        n = 1 << self.z
        if not (0 <= self.x < n and 0 <= self.y < n):
            raise RasterError(f"tile ({self.x}, {self.y}) outside zoom {self.z} grid")


@dataclass(frozen=True)
class TileBBox:
    """Inclusive rectangle of tiles at one zoom level."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int
    z: int

    def __post_init__(self):
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise RasterError("empty tile bbox")
        TileCoord(self.x_min, self.y_min, self.z)
        TileCoord(self.x_max, self.y_max, self.z)

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    @property
    def origin(self) -> TileCoord:
        return TileCoord(self.x_min, self.y_min, self.z)

    def __contains__(self, c: TileCoord) -> bool:
        return c.z == self.z and self.x_min <= c.x <= self.x_max and self.y_min <= c.y <= self.y_max

    def tiles(self) -> list[TileCoord]:
        return [
            TileCoord(x, y, self.z)
            for y in range(self.y_min, self.y_max + 1)
            for x in range(self.x_min, self.x_max + 1)
        ]


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self):
        if not -180.0 <= self.lon <= 180.0:
            raise RasterError(f"longitude {self.lon} out of range")
        if not -MAX_LAT - 1e-9 <= self.lat <= MAX_LAT + 1e-9:
            raise RasterError(f"latitude {self.lat} outside Web-Mercator range")


@dataclass(frozen=True)
class TileImage:
    coord: TileCoord
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise RasterError(f"expected H x W x 3 pixels, got shape {px.shape}")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise RasterError("empty tile image")
        if px.dtype != np.uint8:
            if np.issubdtype(px.dtype, np.integer) and (px.min() < 0 or px.max() > 255):
                raise RasterError("channel values must lie in [0, 255]")
            px = px.astype(np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class BitCanvas:
    """Binary raster anchored at the top-left tile ``origin``."""

    bits: np.ndarray = field(repr=False)
    origin: TileCoord
    tile_size: int = TILE_SIZE

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise RasterError(f"canvas must be 2-D, got shape {b.shape}")
        if b.dtype != np.uint8:
            if b.size and not np.isin(b, (0, 1)).all():
                raise RasterError("canvas cells must be 0 or 1")
            b = b.astype(np.uint8)
        elif b.size and b.max() > 1:
            raise RasterError("canvas cells must be 0 or 1")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def with_bits(self, bits: np.ndarray) -> "BitCanvas":
        return BitCanvas(bits, self.origin, self.tile_size)


# ---------------------------------------------------------------------------
# Georeferencing
# ---------------------------------------------------------------------------


def global_pixel_to_lonlat(gx: float, gy: float, z: int, tile_size: int = TILE_SIZE) -> tuple[float, float]:
    n = float(tile_size * (1 << z))
    lon = gx / n * 360.0 - 180.0
    lat = math.degrees(math.atan(math.sinh(math.pi * (1.0 - 2.0 * gy / n))))
    return lon, lat


def lonlat_to_global_pixel(lon: float, lat: float, z: int, tile_size: int = TILE_SIZE) -> tuple[float, float]:
    n = float(tile_size * (1 << z))
    gx = (lon + 180.0) / 360.0 * n
    lat_r = math.radians(lat)
    gy = (1.0 - math.asinh(math.tan(lat_r)) / math.pi) / 2.0 * n
    return gx, gy


def pixel_to_geo(canvas: BitCanvas, px: tuple[float, float]) -> GeoPoint:
    """Inverse Web-Mercator projection of canvas pixel position ``px = (x, y)``."""
    x, y = px
    if not (0 <= x <= canvas.width and 0 <= y <= canvas.height):
        raise PixelBoundsError(f"pixel {px} outside {canvas.width}x{canvas.height} canvas")
    gx = canvas.origin.x * canvas.tile_size + x
    gy = canvas.origin.y * canvas.tile_size + y
    lon, lat = global_pixel_to_lonlat(gx, gy, canvas.origin.z, canvas.tile_size)
    return GeoPoint(lon, lat)


def pixel_center_to_geo(canvas: BitCanvas, col: float, row: float) -> GeoPoint:
    return pixel_to_geo(canvas, (col + 0.5, row + 0.5))


def geo_to_pixel(canvas: BitCanvas, p: GeoPoint) -> tuple[float, float]:
    """Forward projection of ``p`` into continuous canvas pixel coordinates."""
    gx, gy = lonlat_to_global_pixel(p.lon, p.lat, canvas.origin.z, canvas.tile_size)
    return gx - canvas.origin.x * canvas.tile_size, gy - canvas.origin.y * canvas.tile_size


def pixel_size_deg(z: int, tile_size: int = TILE_SIZE) -> float:
    """Longitude span of one pixel at zoom ``z``."""
    return 360.0 / (tile_size * (1 << z))


# ---------------------------------------------------------------------------
# Mosaicking
# ---------------------------------------------------------------------------


def mosaic(tiles: Sequence[BitCanvas], bbox: TileBBox, tile_size: int = TILE_SIZE) -> BitCanvas:
    """Assemble per-tile masks into one canvas covering ``bbox``.

    Each tile is a ``BitCanvas`` anchored at its own tile coordinate. Slots
    without a tile stay zero.
    """
    out = np.zeros((bbox.height * tile_size, bbox.width * tile_size), dtype=np.uint8)
    for t in tiles:
        if t.origin.z != bbox.z:
            raise RasterError(f"tile {t.origin} has zoom {t.origin.z}, bbox zoom is {bbox.z}")
        if t.origin not in bbox:
            raise RasterError(f"tile {t.origin} outside bbox")
        if t.bits.shape != (tile_size, tile_size):
            raise RasterError(f"tile {t.origin} has shape {t.bits.shape}, expected {tile_size}x{tile_size}")
        r0 = (t.origin.y - bbox.y_min) * tile_size
        c0 = (t.origin.x - bbox.x_min) * tile_size
        out[r0:r0 + tile_size, c0:c0 + tile_size] = t.bits
    return BitCanvas(out, bbox.origin, tile_size)


def crop_tile(canvas: BitCanvas, coord: TileCoord) -> np.ndarray:
    ts = canvas.tile_size
    r0 = (coord.y - canvas.origin.y) * ts
    c0 = (coord.x - canvas.origin.x) * ts
    if coord.z != canvas.origin.z or r0 < 0 or c0 < 0 or r0 + ts > canvas.height or c0 + ts > canvas.width:
        raise RasterError(f"tile {coord} not inside canvas")
    return canvas.bits[r0:r0 + ts, c0:c0 + ts].copy()


# ---------------------------------------------------------------------------
# PNG I/O
# ---------------------------------------------------------------------------


def tile_path(root: Path, coord: TileCoord) -> Path:
    return Path(root) / str(coord.z) / str(coord.x) / f"{coord.y}.png"


def read_tile_image(path: Path, coord: TileCoord) -> TileImage:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return TileImage(coord, arr.copy())


def write_tile_image(path: Path, tile: TileImage) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(tile.pixels), mode="RGB").save(path)


def bits_to_png(path: Path, bits: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((np.asarray(bits, dtype=np.uint8) * 255), mode="L").save(path)


def png_to_bits(path: Path) -> np.ndarray:
    """Read an 8-bit mask; any non-zero value counts as foreground."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr > 127).astype(np.uint8)


def save_canvas(path: Path, canvas: BitCanvas) -> None:
    bits_to_png(path, canvas.bits)


def load_canvas(path: Path, origin: TileCoord, tile_size: int = TILE_SIZE) -> BitCanvas:
    return BitCanvas(png_to_bits(path), origin, tile_size)


def discover_tiles(root: Path, bbox: TileBBox) -> list[TileCoord]:
    """Tiles inside ``bbox`` that have a PNG under ``root``."""
    return [c for c in bbox.tiles() if tile_path(root, c).is_file()]


def load_tiles(root: Path, coords: Iterable[TileCoord]) -> list[TileImage]:
    return [read_tile_image(tile_path(root, c), c) for c in coords]
