"""
Seeded synthetic county for tests and demos.

One county of 2x2 tiles at zoom 17 with straight gray roads on a dark
background, two epochs (the later one adds a road and has one cloud-covered
tile), matching ground-truth GeoJSON, a counties file, a socioeconomic panel
and a config file wired to all of it.

    python -m roadnet.synthetic OUT_DIR
"""

from __future__ import annotations

import argparse
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import graphio
from .graph import GraphBuilder, RoadGraph, haversine_km
from .raster import (
    BitCanvas, TileBBox, TileCoord, TileImage, pixel_center_to_geo, pixel_to_geo, tile_path, write_tile_image,
)
from .stats import REGIONS

ZOOM = 17
X0, Y0 = 107000, 52000
COUNTY = "c001"
YEARS = (2017, 2021)
ROAD_GRAY = 150
ROAD_WIDTH = 3


@dataclass(frozen=True)
class Road:
    """Axis-aligned road centred on pixel row/column ``at`` spanning ``lo..hi``."""

    horizontal: bool
    at: int
    lo: int
    hi: int
    cls: int


ROADS = {
    2017: [
        Road(True, 100, 20, 491, 3),
        Road(True, 300, 20, 491, 3),
        Road(False, 150, 20, 491, 5),
        Road(False, 380, 20, 491, 5),
    ],
}
ROADS[2021] = ROADS[2017] + [Road(True, 440, 20, 491, 4)]
CLOUDY = {2021: (X0 + 1, Y0)}  # top-right tile, road layout unchanged there


def county_bbox() -> TileBBox:
    return TileBBox(X0, Y0, X0 + 1, Y0 + 1, ZOOM)


def paint(roads: list[Road], size: int, width: int = ROAD_WIDTH) -> np.ndarray:
    """Binary road mask on a ``size`` x ``size`` canvas."""
    m = np.zeros((size, size), dtype=np.uint8)
    h = width // 2
    for r in roads:
        if r.horizontal:
            m[r.at - h:r.at - h + width, r.lo:r.hi + 1] = 1
        else:
            m[r.lo:r.hi + 1, r.at - h:r.at - h + width] = 1
    return m


def truth_graph(roads: list[Road], canvas: BitCanvas) -> RoadGraph:
    """Centreline graph: nodes at endpoints and crossings, one edge per stretch."""
    gb = GraphBuilder()
    ids: dict[tuple[int, int], int] = {}

    def node(col, row):
        if (col, row) not in ids:
            ids[(col, row)] = gb.add_node(pixel_center_to_geo(canvas, col, row))
        return ids[(col, row)]

    for r in roads:
        stops = {r.lo, r.hi}
        for o in roads:
            if o.horizontal != r.horizontal and o.lo <= r.at <= o.hi and r.lo <= o.at <= r.hi:
                stops.add(o.at)
        stops = sorted(stops)
        pts = [node(s, r.at) if r.horizontal else node(r.at, s) for s in stops]
        for a, b in zip(pts, pts[1:]):
            gb.add_edge(a, b, r.cls)
    return gb.build()


def render_tiles(mask: np.ndarray, rng: np.random.Generator, cloudy: tuple[int, int] | None, ts: int = 256):
    """RGB tiles keyed by (x, y): textured dark ground, gray roads."""
    out = {}
    for ty in range(mask.shape[0] // ts):
        for tx in range(mask.shape[1] // ts):
            x, y = X0 + tx, Y0 + ty
            sub = mask[ty * ts:(ty + 1) * ts, tx * ts:(tx + 1) * ts]
            if (x, y) == cloudy:
                base = np.full((ts, ts), 225.0)
            else:
                base = np.where(sub == 1, float(ROAD_GRAY), 25.0)
            px = base[..., None] + rng.integers(-10, 11, size=(ts, ts, 3))
            out[(x, y)] = np.clip(px, 0, 255).astype(np.uint8)
    return out


def _area_km2(canvas: BitCanvas) -> float:
    nw = pixel_to_geo(canvas, (0, 0))
    ne = pixel_to_geo(canvas, (canvas.width, 0))
    sw = pixel_to_geo(canvas, (0, canvas.height))
    return haversine_km(nw, ne) * haversine_km(nw, sw)


def make_panel(rng: np.random.Generator, n: int = 60, road_km: dict[int, float] | None = None) -> list[list]:
    """County panel for two epochs following a noisy power law, with a GDP
    response to road growth."""
    rows = []
    for i in range(n):
        cid = COUNTY if i == 0 else f"c{i + 1:03d}"
        region = REGIONS[i % len(REGIONS)]
        pop = float(np.exp(rng.normal(6.0, 0.6)))  # thousand people
        if road_km and cid == COUNTY:
            pop = (road_km[YEARS[0]] / 3.0) ** 1.25  # keep the fixture county on the power law
        area = float(rng.uniform(500, 5000))
        rl0 = 3.0 * pop ** 0.8 * float(np.exp(rng.normal(0, 0.1)))
        growth = float(rng.uniform(0.0, 0.3))
        gdp0 = 0.05 * pop * float(np.exp(rng.normal(0, 0.2)))
        for year in YEARS:
            late = year == YEARS[1]
            rl = rl0 * (1 + growth) if late else rl0
            if road_km and cid == COUNTY:
                rl = road_km[year]
            p = pop * (1.02 if late else 1.0)
            gdp = gdp0 * (1.1 + 2.0 * growth if late else 1.0)
            sse = gdp * 0.3 * float(np.exp(rng.normal(0, 0.05)))
            bal = gdp * 0.1 * float(np.exp(rng.normal(0, 0.05)))
            rows.append([cid, region, year, f"{p:.6f}", f"{gdp:.6f}", f"{sse:.6f}", f"{bal:.6f}",
                         f"{rl:.6f}", f"{area:.3f}"])
    return rows


def build(out_dir: Path, seed: int = 0) -> Path:
    """Write the synthetic county under ``out_dir``; returns the config path."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    bbox = county_bbox()
    size = 2 * 256
    canvas = BitCanvas(np.zeros((size, size), np.uint8), bbox.origin)
    road_km = {}
    for year in YEARS:
        mask = paint(ROADS[year], size)
        for (x, y), px in render_tiles(mask, rng, CLOUDY.get(year)).items():
            c = TileCoord(x, y, ZOOM)
            write_tile_image(tile_path(out_dir / "tiles" / str(year), c), TileImage(c, px))
        g = truth_graph(ROADS[year], canvas)
        (out_dir / "truth").mkdir(parents=True, exist_ok=True)
        graphio.write_geojson(out_dir / "truth" / f"{COUNTY}_{year}.geojson", g)
        road_km[year] = sum(haversine_km(g.nodes[u], g.nodes[v]) for u, v in g.edges)

    with open(out_dir / "counties.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["county_id", "area_km2", "x_min", "y_min", "x_max", "y_max"])
        w.writerow([COUNTY, f"{_area_km2(canvas):.6f}", bbox.x_min, bbox.y_min, bbox.x_max, bbox.y_max])

    with open(out_dir / "panel.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["county_id", "region", "year", "population", "gdp", "sse", "balance", "road_length_km", "area_km2"])
        w.writerows(make_panel(rng, road_km=road_km))

    cfg = {
        "tile_root": "tiles",
        "truth_root": "truth",
        "counties_file": "counties.csv",
        "panel_csv": "panel.csv",
        "output_dir": "out",
        "zoom": ZOOM,
        "years": list(YEARS),
        "seed": seed,
    }
    path = out_dir / "config.yaml"
    path.write_text(yaml.safe_dump(cfg, sort_keys=False), encoding="utf-8")
    return path


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(prog="python -m roadnet.synthetic", description="Write a synthetic county fixture.")
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    print(build(args.out_dir, args.seed))


if __name__ == "__main__":
    main()
