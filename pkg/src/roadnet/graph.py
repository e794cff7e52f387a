"""Undirected georeferenced road graph, segment simplification and length."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from .raster import GeoPoint

EARTH_RADIUS_KM = 6371.0088
N_CLASSES = 10


class GraphError(ValueError):
    pass


def _key(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass
class RoadGraph:
    """Nodes keyed by id, edges as unordered id pairs, optional edge classes 1-10."""

    nodes: dict[int, GeoPoint] = field(default_factory=dict)
    edges: list[tuple[int, int]] = field(default_factory=list)
    classes: dict[tuple[int, int], int] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        norm = []
        for u, v in self.edges:
            if u == v:
                raise GraphError(f"self-loop on node {u}")
            if u not in self.nodes or v not in self.nodes:
                raise GraphError(f"edge ({u}, {v}) references a missing node")
            k = _key(u, v)
            if k in seen:
                raise GraphError(f"duplicate edge {k}")
            seen.add(k)
            norm.append(k)
        self.edges = norm
        self.classes = {_key(*k): int(c) for k, c in self.classes.items()}
        for k, c in self.classes.items():
            if k not in seen:
                raise GraphError(f"class given for unknown edge {k}")
            if not 1 <= c <= N_CLASSES:
                raise GraphError(f"edge class {c} outside 1..{N_CLASSES}")

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def is_classed(self) -> bool:
        return bool(self.edges) and len(self.classes) == len(self.edges)

    def edge_class(self, u: int, v: int) -> int | None:
        return self.classes.get(_key(u, v))

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {n: [] for n in self.nodes}
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def degree(self) -> dict[int, int]:
        deg = dict.fromkeys(self.nodes, 0)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def coords(self, n: int) -> tuple[float, float]:
        p = self.nodes[n]
        return (p.lon, p.lat)

    def subgraph_by_class(self, cls: int) -> "RoadGraph":
        edges = [e for e in self.edges if self.classes.get(e) == cls]
        used = {n for e in edges for n in e}
        return RoadGraph({n: self.nodes[n] for n in sorted(used)}, edges, {e: cls for e in edges})

    def connected_components(self) -> list[set[int]]:
        adj = self.adjacency()
        seen: set[int] = set()
        comps = []
        for n in sorted(self.nodes):
            if n in seen:
                continue
            comp, stack = set(), [n]
            seen.add(n)
            while stack:
                u = stack.pop()
                comp.add(u)
                for w in adj[u]:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            comps.append(comp)
        return comps


class GraphBuilder:
    """Incremental construction that keeps the graph simple."""

    def __init__(self):
        self.nodes: dict[int, GeoPoint] = {}
        self.edges: dict[tuple[int, int], None] = {}
        self.classes: dict[tuple[int, int], int] = {}

    def add_node(self, p: GeoPoint, node_id: int | None = None) -> int:
        if node_id is None:
            node_id = len(self.nodes)
            while node_id in self.nodes:
                node_id += 1
        self.nodes[node_id] = p
        return node_id

    def has_edge(self, u: int, v: int) -> bool:
        return _key(u, v) in self.edges

    def add_edge(self, u: int, v: int, cls: int | None = None) -> bool:
        if u == v or self.has_edge(u, v):
            return False
        k = _key(u, v)
        self.edges[k] = None
        if cls is not None:
            self.classes[k] = cls
        return True

    def build(self) -> RoadGraph:
        return RoadGraph(dict(self.nodes), list(self.edges), dict(self.classes))


# ---------------------------------------------------------------------------
# Simplification
# ---------------------------------------------------------------------------


def simplify_to_segments(g: RoadGraph) -> RoadGraph:
    """Collapse chains of degree-2 nodes into straight edges between terminals.

    A node is terminal when its degree is not 2 or its two edges carry
    different classes. Where a collapse would create a self-loop or a
    duplicate edge, intermediate chain nodes are retained instead; pure
    cycles keep three evenly spaced anchors.
    """
    adj = g.adjacency()
    deg = {n: len(a) for n, a in adj.items()}

    def terminal(n: int) -> bool:
        if deg[n] != 2:
            return True
        a, b = adj[n]
        return g.edge_class(n, a) != g.edge_class(n, b)

    out = GraphBuilder()
    done: set[tuple[int, int]] = set()

    def keep(n: int) -> None:
        if n not in out.nodes:
            out.add_node(g.nodes[n], n)

    def emit(chain: list[int], cls: int | None) -> None:
        a, b = chain[0], chain[-1]
        if a != b and not out.has_edge(a, b):
            keep(a)
            keep(b)
            out.add_edge(a, b, cls)
            return
        inner = chain[1:-1]
        if a == b:
            anchors = sorted({len(chain) // 3, 2 * len(chain) // 3} - {0, len(chain) - 1})
        else:
            anchors = [len(chain) // 2] if inner else []
        if not anchors:
            return
        idx = [0, *anchors, len(chain) - 1]
        for i0, i1 in zip(idx, idx[1:]):
            emit(chain[i0:i1 + 1], cls)

    for t in sorted(n for n in g.nodes if terminal(n)):
        keep(t)
        for nb in sorted(adj[t]):
            if _key(t, nb) in done:
                continue
            chain, prev, cur = [t, nb], t, nb
            done.add(_key(t, nb))
            while not terminal(cur):
                nxt = adj[cur][0] if adj[cur][0] != prev else adj[cur][1]
                done.add(_key(cur, nxt))
                chain.append(nxt)
                prev, cur = cur, nxt
            emit(chain, g.edge_class(t, nb))

    # components made only of non-terminal nodes are pure cycles
    for n in sorted(g.nodes):
        if terminal(n) or any(_key(n, w) in done for w in adj[n]):
            continue
        cycle, prev, cur = [n], None, n
        while True:
            a, b = adj[cur]
            nxt = a if a != prev and not (prev is None and a > b) else b
            done.add(_key(cur, nxt))
            if nxt == n:
                break
            cycle.append(nxt)
            prev, cur = cur, nxt
        m = len(cycle)
        anchors = [0, m // 3, 2 * m // 3, m]
        ring = cycle + [n]
        cls = g.edge_class(ring[0], ring[1])
        for i0, i1 in zip(anchors, anchors[1:]):
            emit(ring[i0:i1 + 1], cls)

    return out.build()


# ---------------------------------------------------------------------------
# Length and density
# ---------------------------------------------------------------------------


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dp = p2 - p1
    dl = math.radians(b.lon - a.lon)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def total_length_km(g: RoadGraph) -> float:
    return math.fsum(haversine_km(g.nodes[u], g.nodes[v]) for u, v in g.edges)


def road_density(g: RoadGraph, area_km2: float) -> float:
    if not area_km2 > 0:
        raise ValueError(f"area must be positive, got {area_km2}")
    return total_length_km(g) / area_km2


def length_by_class(g: RoadGraph) -> dict[int, float]:
    out: dict[int, float] = defaultdict(float)
    for u, v in g.edges:
        c = g.classes.get((u, v))
        if c is not None:
            out[c] += haversine_km(g.nodes[u], g.nodes[v])
    return dict(out)


def from_coords(points: Iterable[tuple[float, float]], edges: Iterable[tuple[int, int]], classes=None) -> RoadGraph:
    """Convenience constructor from (lon, lat) tuples indexed by position."""
    nodes = {i: GeoPoint(float(lon), float(lat)) for i, (lon, lat) in enumerate(points)}
    return RoadGraph(nodes, list(edges), dict(classes or {}))
