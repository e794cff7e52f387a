"""
Skeleton-to-graph conversion (combustion walk).

Crossing pixels are skeleton pixels whose fringe count is 1 (road end) or
greater than 2 (junction). Adjacent crossing pixels are merged into a single
node; every branch between two crossing clusters is walked once, with extra
nodes planted every ``node_interval`` pixels along the walk.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .graph import GraphBuilder, RoadGraph, total_length_km
from .raster import BitCanvas, PixelBoundsError, pixel_center_to_geo

logger = logging.getLogger(__name__)

# clockwise from east, rows growing downward
_CW = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))


@dataclass(frozen=True)
class ExtractParams:
    node_interval: int = 50
    fringe_radius: int = 1

    def __post_init__(self):
        if self.node_interval < 1:
            raise ValueError("node_interval must be >= 1")
        if self.fringe_radius < 1:
            raise ValueError("fringe_radius must be >= 1")


def _ring_offsets(radius: int) -> list[tuple[int, int]]:
    """Square ring at Chebyshev distance ``radius``, clockwise from the NW corner."""
    r = radius
    top = [(-r, dc) for dc in range(-r, r)]
    right = [(dr, r) for dr in range(-r, r)]
    bottom = [(r, dc) for dc in range(r, -r, -1)]
    left = [(dr, -r) for dr in range(r, -r, -1)]
    return top + right + bottom + left


def _fringe_array(bits: np.ndarray, radius: int = 1) -> np.ndarray:
    h, w = bits.shape
    p = np.pad(bits.astype(np.int8), radius)
    ring = [p[radius + dr:radius + dr + h, radius + dc:radius + dc + w] for dr, dc in _ring_offsets(radius)]
    rises = sum(((ring[i] == 0) & (ring[(i + 1) % len(ring)] == 1)).astype(np.int16) for i in range(len(ring)))
    full = np.logical_and.reduce([v == 1 for v in ring])
    return np.where(full, 1, rises).astype(np.int16)


def fringe_count(canvas: BitCanvas, px: tuple[int, int], radius: int = 1) -> int:
    """Number of foreground runs on the ring around skeleton pixel ``px = (x, y)``."""
    x, y = px
    if not (0 <= x < canvas.width and 0 <= y < canvas.height):
        raise PixelBoundsError(f"pixel {px} outside canvas")
    if not canvas.bits[y, x]:
        raise ValueError(f"pixel {px} is background")
    r = radius
    win = np.pad(canvas.bits, r)[y:y + 2 * r + 1, x:x + 2 * r + 1]
    return int(_fringe_array(win, r)[r, r])


def crossing_mask(bits: np.ndarray, radius: int = 1) -> np.ndarray:
    f = _fringe_array(bits, radius)
    return bits.astype(bool) & ((f == 1) | (f > 2))


def detect_crossings(canvas: BitCanvas, radius: int = 1) -> set[tuple[int, int]]:
    rows, cols = np.nonzero(crossing_mask(canvas.bits, radius))
    return {(int(c), int(r)) for r, c in zip(rows, cols)}


# ---------------------------------------------------------------------------
# Pixel graph
# ---------------------------------------------------------------------------


def _pixel_neighbours(img: np.ndarray, r: int, c: int) -> list[tuple[int, int]]:
    """Skeleton neighbours of (r, c) with diagonal shortcuts removed.

    A diagonal step is dropped when either pixel completing the 2x2 square is
    foreground; the walk then goes around the corner instead of cutting it.
    """
    out = []
    for dr, dc in _CW:
        q = (r + dr, c + dc)
        if not img[q]:
            continue
        if dr and dc and (img[r + dr, c] or img[r, c + dc]):
            continue
        out.append(q)
    return out


def extract_graph(canvas: BitCanvas, p: ExtractParams = ExtractParams()) -> RoadGraph:
    """Convert a refined skeleton into a georeferenced :class:`RoadGraph`."""
    img = np.pad(canvas.bits, 1).astype(np.uint8)
    fg = [tuple(map(int, q)) for q in np.argwhere(img)]
    if not fg:
        return RoadGraph()

    nbrs = {q: _pixel_neighbours(img, *q) for q in fg}
    cross = np.pad(crossing_mask(canvas.bits, p.fringe_radius), 1)
    # degree != 2 pixels anchor the walk too (walk is undefined through them)
    is_node = {q for q in fg if cross[q] or len(nbrs[q]) != 2}

    # merge adjacent node pixels into clusters
    cluster_of: dict[tuple[int, int], int] = {}
    clusters: list[list[tuple[int, int]]] = []
    for q in fg:
        if q not in is_node or q in cluster_of:
            continue
        members, stack = [], [q]
        cluster_of[q] = len(clusters)
        while stack:
            a = stack.pop()
            members.append(a)
            for b in nbrs[a]:
                if b in is_node and b not in cluster_of:
                    cluster_of[b] = len(clusters)
                    stack.append(b)
        clusters.append(sorted(members))

    gb = GraphBuilder()

    def geo(r: float, c: float):
        # padded (r, c) -> canvas pixel centre
        return pixel_center_to_geo(canvas, c - 1, r - 1)

    cluster_node = []
    for members in clusters:
        if len(members) == 1 and not nbrs[members[0]]:
            cluster_node.append(None)  # isolated pixel, no road
            continue
        rr = float(np.mean([m[0] for m in members]))
        cc = float(np.mean([m[1] for m in members]))
        cluster_node.append(gb.add_node(geo(rr, cc)))

    walked: set[frozenset] = set()

    def lay_path(path: list[tuple[int, int]], u: int, v: int) -> None:
        steps = len(path) - 1
        idx = [k for k in range(p.node_interval, steps, p.node_interval)]
        if u == v and len(idx) < 2:
            idx = sorted(set(idx) | {steps // 3, 2 * steps // 3} - {0, steps})
        stops = [(0, u)] + [(i, gb.add_node(geo(*path[i]))) for i in idx] + [(steps, v)]
        for (i0, a), (i1, b) in zip(stops, stops[1:]):
            if a != b and not gb.has_edge(a, b):
                gb.add_edge(a, b)
            elif i1 - i0 >= 2:
                mid = (i0 + i1) // 2
                m = gb.add_node(geo(*path[mid]))
                gb.add_edge(a, m)
                gb.add_edge(m, b)

    for ci, members in enumerate(clusters):
        u = cluster_node[ci]
        if u is None:
            continue
        for start in members:
            for q in nbrs[start]:
                if cluster_of.get(q) == ci or frozenset((start, q)) in walked:
                    continue
                path = [start, q]
                walked.add(frozenset((start, q)))
                prev, cur = start, q
                while cur not in is_node:
                    a, b = nbrs[cur]
                    nxt = b if a == prev else a
                    walked.add(frozenset((cur, nxt)))
                    path.append(nxt)
                    prev, cur = cur, nxt
                lay_path(path, u, cluster_node[cluster_of[cur]])

    # crossing-free cycles
    for q in fg:
        if q in is_node or all(frozenset((q, n)) in walked for n in nbrs[q]):
            continue
        ring, prev, cur = [q], None, q
        while True:
            a, b = nbrs[cur]
            nxt = a if prev is None or b == prev else b
            walked.add(frozenset((cur, nxt)))
            if nxt == q:
                break
            ring.append(nxt)
            prev, cur = cur, nxt
        half = len(ring) // 2
        a0 = gb.add_node(geo(*ring[0]))
        a1 = gb.add_node(geo(*ring[half]))
        lay_path(ring[:half + 1], a0, a1)
        lay_path(ring[half:] + [ring[0]], a1, a0)

    g = gb.build()
    logger.debug("extracted %d nodes, %d edges", len(g.nodes), len(g.edges))
    return g


def graph_stats(g: RoadGraph, area_km2: float | None) -> dict:
    length = total_length_km(g)
    return {
        "total_length_km": length,
        "density_km_per_km2": (length / area_km2) if area_km2 else float("nan"),
        "node_count": len(g.nodes),
        "edge_count": len(g.edges),
    }
