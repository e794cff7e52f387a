"""
Mask post-processing: closing, Zhang-Suen thinning and small-component
refinement, plus a threshold segmenter used when no external masks exist.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .raster import BitCanvas, TileImage

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MorphParams:
    kernel_size: int = 11
    refine_min_len: int = 500
    refine_connectivity: int = 4

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 1, got {self.kernel_size}")
        if self.refine_min_len < 1:
            raise ValueError("refine_min_len must be >= 1")
        if self.refine_connectivity not in (4, 8):
            raise ValueError("refine_connectivity must be 4 or 8")


@dataclass(frozen=True)
class SegmentParams:
    """Grayscale band and local-contrast cap for :func:`baseline_segment`."""

    band_lo: float = 100.0
    band_hi: float = 200.0
    contrast_cap: float = 255.0

    def __post_init__(self):
        if self.band_hi < self.band_lo:
            raise ValueError("band_hi < band_lo")


def baseline_segment(img: TileImage, p: SegmentParams = SegmentParams()) -> BitCanvas:
    """Mark pixels whose channel-mean gray lies in ``[band_lo, band_hi]`` and
    whose 3x3 gray range is at most ``contrast_cap``."""
    gray = img.pixels.astype(np.float64).mean(axis=2)
    in_band = (gray >= p.band_lo) & (gray <= p.band_hi)
    contrast = ndimage.maximum_filter(gray, size=3, mode="nearest") - ndimage.minimum_filter(gray, size=3, mode="nearest")
    bits = (in_band & (contrast <= p.contrast_cap)).astype(np.uint8)
    return BitCanvas(bits, img.coord, img.width)


# ---------------------------------------------------------------------------
# Closing
# ---------------------------------------------------------------------------


def _square_max(a: np.ndarray, r: int) -> np.ndarray:
    # separable sliding max; cells beyond the array count as 0
    out = a.copy()
    for axis in (0, 1):
        src = out
        out = src.copy()
        n = src.shape[axis]
        for d in range(1, r + 1):
            if d >= n:
                break
            lead = [slice(None)] * 2
            trail = [slice(None)] * 2
            lead[axis], trail[axis] = slice(0, n - d), slice(d, n)
            np.maximum(out[tuple(lead)], src[tuple(trail)], out=out[tuple(lead)])
            np.maximum(out[tuple(trail)], src[tuple(lead)], out=out[tuple(trail)])
    return out


def dilate(bits: np.ndarray, kernel_size: int) -> np.ndarray:
    return _square_max(np.asarray(bits, dtype=np.uint8), kernel_size // 2)


def erode(bits: np.ndarray, kernel_size: int) -> np.ndarray:
    """Square erosion; cells beyond the array count as foreground."""
    inv = 1 - np.asarray(bits, dtype=np.uint8)
    return 1 - _square_max(inv, kernel_size // 2)


def close(canvas: BitCanvas, p: MorphParams = MorphParams()) -> BitCanvas:
    """Dilate then erode with a ``kernel_size`` square.

    The canvas is treated as a window onto an unbounded plane whose outside
    is background, so the result is always a superset of the input.
    """
    k = p.kernel_size
    if k > min(canvas.width, canvas.height):
        raise ValueError(f"kernel {k} larger than canvas {canvas.width}x{canvas.height}")
    r = k // 2
    padded = np.pad(canvas.bits, r)
    closed = erode(dilate(padded, k), k)
    return canvas.with_bits(closed[r:r + canvas.height, r:r + canvas.width])


# ---------------------------------------------------------------------------
# Thinning
# ---------------------------------------------------------------------------

# Neighbour offsets P2..P9: N, NE, E, SE, S, SW, W, NW (clockwise from north)
_RING = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def _build_simple_lut() -> np.ndarray:
    """Simple-point table for (8, 4) topology, indexed by the P2..P9 bit code."""
    lut = np.zeros(256, dtype=bool)
    pos = [(1 + dr, 1 + dc) for dr, dc in _RING]
    four = {(0, 1), (1, 0), (1, 2), (2, 1)}
    for code in range(256):
        fg = {pos[i] for i in range(8) if code >> i & 1}
        bg = {pos[i] for i in range(8) if not code >> i & 1}
        t8 = _count_components(fg, diag=True)
        t4 = sum(1 for comp in _components(bg, diag=False) if comp & four)
        lut[code] = t8 == 1 and t4 == 1
    return lut


def _components(cells: set, diag: bool) -> list[set]:
    comps, seen = [], set()
    for start in sorted(cells):
        if start in seen:
            continue
        comp, stack = set(), [start]
        seen.add(start)
        while stack:
            r, c = stack.pop()
            comp.add((r, c))
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if (dr, dc) == (0, 0) or (not diag and dr and dc):
                        continue
                    q = (r + dr, c + dc)
                    if q in cells and q not in seen:
                        seen.add(q)
                        stack.append(q)
        comps.append(comp)
    return comps


def _count_components(cells: set, diag: bool) -> int:
    return len(_components(cells, diag))


_SIMPLE = _build_simple_lut()


def _ring_code(img: np.ndarray, r: int, c: int) -> int:
    code = 0
    for i, (dr, dc) in enumerate(_RING):
        if img[r + dr, c + dc]:
            code |= 1 << i
    return code


def is_simple(img: np.ndarray, r: int, c: int) -> bool:
    """Whether deleting (r, c) leaves (8, 4) topology unchanged.

    ``img`` must have a background border so (r, c) is never on the edge.
    """
    return bool(_SIMPLE[_ring_code(img, r, c)])


def _zs_conditions(img: np.ndarray, step: int) -> np.ndarray:
    """Vectorised Zhang-Suen deletion test on a zero-bordered array."""
    h, w = img.shape
    P = [img[1 + dr:h - 1 + dr, 1 + dc:w - 1 + dc].astype(np.int8) for dr, dc in _RING]
    B = sum(P)
    A = sum(((P[i] == 0) & (P[(i + 1) % 8] == 1)).astype(np.int8) for i in range(8))
    P2, P3, P4, P5, P6, P7, P8, P9 = P
    if step == 0:
        d = (P2 * P4 * P6 == 0) & (P4 * P6 * P8 == 0)
    else:
        d = (P2 * P4 * P8 == 0) & (P2 * P6 * P8 == 0)
    core = img[1:-1, 1:-1].astype(bool)
    out = np.zeros_like(img, dtype=bool)
    out[1:-1, 1:-1] = core & (B >= 2) & (B <= 6) & (A == 1) & d
    return out


def _zs_ok(img: np.ndarray, r: int, c: int, step: int) -> bool:
    n = [int(img[r + dr, c + dc]) for dr, dc in _RING]
    b = sum(n)
    if not 2 <= b <= 6:
        return False
    a = sum(1 for i in range(8) if n[i] == 0 and n[(i + 1) % 8] == 1)
    if a != 1:
        return False
    P2, P3, P4, P5, P6, P7, P8, P9 = n
    if step == 0:
        return P2 * P4 * P6 == 0 and P4 * P6 * P8 == 0
    return P2 * P4 * P8 == 0 and P2 * P6 * P8 == 0


def _zhang_suen_pass(img: np.ndarray) -> bool:
    """One full pass (both sub-iterations) in place. Returns whether anything changed."""
    changed = False
    for step in (0, 1):
        cand = np.argwhere(_zs_conditions(img, step))
        # Parallel deletion can erase 2-pixel-thick structures outright; deleting
        # in raster order with a re-check keeps every removal topology-safe.
        for r, c in cand:
            if _zs_ok(img, r, c, step):
                img[r, c] = 0
                changed = True
    return changed


def _clear_blocks(img: np.ndarray) -> bool:
    """Remove simple pixels that sit in 2x2 solid blocks."""
    changed = False
    while True:
        blocks = img[:-1, :-1] & img[1:, :-1] & img[:-1, 1:] & img[1:, 1:]
        if not blocks.any():
            return changed
        members = np.zeros_like(img, dtype=bool)
        for dr in (0, 1):
            for dc in (0, 1):
                members[dr:dr + blocks.shape[0], dc:dc + blocks.shape[1]] |= blocks.astype(bool)
        removed = False
        for r, c in np.argwhere(members):
            if img[r, c] and _in_block(img, r, c) and is_simple(img, r, c):
                img[r, c] = 0
                removed = changed = True
        if not removed:
            return changed


def _in_block(img: np.ndarray, r: int, c: int) -> bool:
    for dr in (-1, 0):
        for dc in (-1, 0):
            if img[r + dr:r + dr + 2, c + dc:c + dc + 2].all():
                return True
    return False


def thin(bits: np.ndarray) -> np.ndarray:
    img = np.pad(np.asarray(bits, dtype=np.uint8), 1)
    while True:
        while _zhang_suen_pass(img):
            pass
        if not _clear_blocks(img):
            break
    return img[1:-1, 1:-1].copy()


def skeletonize(canvas: BitCanvas) -> BitCanvas:
    """Zhang-Suen thinning to a one-pixel-wide, 8-connected skeleton."""
    return canvas.with_bits(thin(canvas.bits))


# ---------------------------------------------------------------------------
# Refinement
# ---------------------------------------------------------------------------

_STRUCT = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


def component_sizes(bits: np.ndarray, connectivity: int = 4) -> tuple[np.ndarray, np.ndarray]:
    labels, n = ndimage.label(bits, structure=_STRUCT[connectivity])
    return labels, np.bincount(labels.ravel(), minlength=n + 1)


def refine(canvas: BitCanvas, p: MorphParams = MorphParams()) -> BitCanvas:
    """Drop connected components with fewer than ``refine_min_len`` pixels."""
    labels, sizes = component_sizes(canvas.bits, p.refine_connectivity)
    keep = sizes >= p.refine_min_len
    keep[0] = False
    dropped = int((~keep[1:]).sum())
    if dropped:
        logger.debug("refine dropped %d of %d components", dropped, len(sizes) - 1)
    return canvas.with_bits(keep[labels].astype(np.uint8))


def postprocess(canvas: BitCanvas, p: MorphParams = MorphParams()) -> BitCanvas:
    """close -> skeletonize -> refine."""
    return refine(skeletonize(close(canvas, p)), p)
