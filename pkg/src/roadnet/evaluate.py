"""
Graph-sampling evaluation of an extracted network H against ground truth G.

Both graphs are resampled into point sets at a fixed arc-length interval;
points are matched one-to-one under a distance cap. Precision is the matched
share of H's samples, recall the matched share of G's.

Distances are Euclidean in the (lon, lat) plane by default, so
``sample_interval`` and ``max_match_dist`` are in degrees. With
``metric="haversine"`` both are in kilometres.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .graph import EARTH_RADIUS_KM, N_CLASSES, RoadGraph, haversine_km, simplify_to_segments, total_length_km

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplingParams:
    sample_interval: float = 0.01
    max_match_dist: float = 0.1
    k: int = 3
    metric: str = "euclidean"
    matcher: str = "greedy"

    def __post_init__(self):
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be positive")
        if not self.max_match_dist > 0:
            raise ValueError("max_match_dist must be positive")
        if self.k < 3:
            raise ValueError("k must be >= 3")
        if self.metric not in ("euclidean", "haversine"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.matcher not in ("greedy", "optimal"):
            raise ValueError(f"unknown matcher {self.matcher!r}")


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _edge_len(g: RoadGraph, u: int, v: int, metric: str) -> float:
    if metric == "haversine":
        return haversine_km(g.nodes[u], g.nodes[v])
    a, b = g.nodes[u], g.nodes[v]
    return math.hypot(b.lon - a.lon, b.lat - a.lat)


def sample_points(g: RoadGraph, interval: float, metric: str = "euclidean") -> np.ndarray:
    """Points every ``interval`` along each edge, endpoints included once.

    Returns an ``(n, 2)`` array of (lon, lat).
    """
    if not interval > 0:
        raise ValueError("interval must be positive")
    used = sorted({n for e in g.edges for n in e})
    pts = [g.coords(n) for n in used]
    for u, v in g.edges:
        length = _edge_len(g, u, v, metric)
        n_inner = math.ceil(length / interval - 1e-9) - 1
        if n_inner <= 0:
            continue
        (x0, y0), (x1, y1) = g.coords(u), g.coords(v)
        t = np.arange(1, n_inner + 1) * interval / length
        pts.extend(zip(x0 + t * (x1 - x0), y0 + t * (y1 - y0)))
    return np.asarray(pts, dtype=np.float64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------------


def _unit_xyz(pts: np.ndarray) -> np.ndarray:
    lon, lat = np.radians(pts[:, 0]), np.radians(pts[:, 1])
    return np.column_stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])


def candidate_pairs(gs: np.ndarray, hs: np.ndarray, max_dist: float, metric: str = "euclidean"):
    """All (i, j, d) with distance d <= max_dist, as three arrays."""
    gs = np.asarray(gs, dtype=np.float64).reshape(-1, 2)
    hs = np.asarray(hs, dtype=np.float64).reshape(-1, 2)
    empty = (np.zeros(0, int), np.zeros(0, int), np.zeros(0))
    if len(gs) == 0 or len(hs) == 0:
        return empty
    if metric == "haversine":
        chord = 2 * math.sin(min(max_dist / (2 * EARTH_RADIUS_KM), math.pi / 2))
        sm = cKDTree(_unit_xyz(gs)).sparse_distance_matrix(cKDTree(_unit_xyz(hs)), chord * (1 + 1e-12), output_type="ndarray")
        i, j = sm["i"].astype(int), sm["j"].astype(int)
        d = 2 * EARTH_RADIUS_KM * np.arcsin(np.clip(sm["v"] / 2, 0, 1))
        ok = d <= max_dist
        return i[ok], j[ok], d[ok]
    sm = cKDTree(gs).sparse_distance_matrix(cKDTree(hs), max_dist, output_type="ndarray")
    return sm["i"].astype(int), sm["j"].astype(int), sm["v"].astype(np.float64)


def match_samples(gs, hs, max_dist: float, metric: str = "euclidean", matcher: str = "greedy") -> list[tuple[int, int, float]]:
    """One-to-one matching of G samples to H samples within ``max_dist``.

    Greedy mode accepts candidate pairs in increasing distance order. Ties are
    broken on the coordinates of the two points (smaller point first), which
    makes the result independent of input order and symmetric under swapping
    the two sets. ``matcher="optimal"`` maximises the number of matches, then
    minimises total distance.
    """
    gs = np.asarray(gs, dtype=np.float64).reshape(-1, 2)
    hs = np.asarray(hs, dtype=np.float64).reshape(-1, 2)
    i, j, d = candidate_pairs(gs, hs, max_dist, metric)
    if len(i) == 0:
        return []
    if matcher == "optimal":
        return _optimal(i, j, d, len(gs), len(hs), max_dist)

    gp, hp = gs[i], hs[j]
    g_first = (gp[:, 0] < hp[:, 0]) | ((gp[:, 0] == hp[:, 0]) & (gp[:, 1] <= hp[:, 1]))
    lo = np.where(g_first[:, None], gp, hp)
    hi = np.where(g_first[:, None], hp, gp)
    order = np.lexsort((hi[:, 1], hi[:, 0], lo[:, 1], lo[:, 0], d))

    g_used = np.zeros(len(gs), dtype=bool)
    h_used = np.zeros(len(hs), dtype=bool)
    out = []
    for k in order:
        a, b = i[k], j[k]
        if g_used[a] or h_used[b]:
            continue
        g_used[a] = h_used[b] = True
        out.append((int(a), int(b), float(d[k])))
    return out


def _optimal(i, j, d, n_g, n_h, max_dist):
    gi, g_idx = np.unique(i, return_inverse=True)
    hj, h_idx = np.unique(j, return_inverse=True)
    # big constant per non-match dominates any sum of real distances
    big = max_dist * (min(len(gi), len(hj)) + 1) + 1.0
    cost = np.full((len(gi), len(hj)), big)
    cost[g_idx, h_idx] = d
    rows, cols = linear_sum_assignment(cost)
    return [
        (int(gi[r]), int(hj[c]), float(cost[r, c]))
        for r, c in zip(rows, cols)
        if cost[r, c] < big
    ]


def prf1(matching: Sequence, gs, hs) -> tuple[float, float, float]:
    m = len(matching)
    n_h, n_g = len(hs), len(gs)
    precision = m / n_h if n_h else 0.0
    recall = m / n_g if n_g else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


# ---------------------------------------------------------------------------
# Intersections, lengths, classes
# ---------------------------------------------------------------------------


def intersections(g: RoadGraph, k: int) -> np.ndarray:
    s = simplify_to_segments(g)
    deg = s.degree()
    return np.asarray([s.coords(n) for n in sorted(s.nodes) if deg[n] >= k], dtype=np.float64).reshape(-1, 2)


def ri_at_k(g: RoadGraph, h: RoadGraph, params: SamplingParams = SamplingParams()) -> float | None:
    """Share of G's degree >= k intersections with an H intersection nearby.

    Returns ``None`` when G has no such intersection.
    """
    gi = intersections(g, params.k)
    if len(gi) == 0:
        logger.info("ground truth has no degree>=%d intersection; RI undefined", params.k)
        return None
    hi = intersections(h, params.k)
    m = match_samples(gi, hi, params.max_match_dist, params.metric, params.matcher)
    return len(m) / len(gi)


def _area_pair(area) -> tuple[float, float]:
    if isinstance(area, (tuple, list)):
        return float(area[0]), float(area[1])
    return float(area), float(area)


def mrl_mrd(pairs: Sequence[tuple[RoadGraph, RoadGraph, object]]) -> tuple[float, float]:
    """Mean absolute percentage error of road length and road density.

    Each entry is ``(G_i, H_i, area_i)``; ``area_i`` is one area shared by
    both graphs or an ``(area_G, area_H)`` pair. Counties whose ground truth
    has zero length are skipped.
    """
    mrl, mrd = [], []
    for idx, (g, h, area) in enumerate(pairs):
        lg, lh = total_length_km(g), total_length_km(h)
        if lg <= 0:
            logger.warning("county %d: ground-truth length is zero; excluded from MRL/MRD", idx)
            continue
        ag, ah = _area_pair(area)
        dg, dh = lg / ag, lh / ah
        mrl.append(abs(lg - lh) / lg)
        mrd.append(abs(dg - dh) / dg)
    if not mrl:
        return float("nan"), float("nan")
    return float(np.mean(mrl)), float(np.mean(mrd))


def per_class_recall(g_classed: RoadGraph, h: RoadGraph, params: SamplingParams = SamplingParams()) -> dict[int, float | None]:
    """Recall of each ground-truth road class against the whole of H.

    Classes without samples map to ``None``.
    """
    if g_classed.edges and not g_classed.is_classed:
        raise ValueError("every ground-truth edge needs a class label")
    hs = sample_points(h, params.sample_interval, params.metric)
    out: dict[int, float | None] = {}
    for c in range(1, N_CLASSES + 1):
        sub = g_classed.subgraph_by_class(c)
        gs = sample_points(sub, params.sample_interval, params.metric)
        if len(gs) == 0:
            out[c] = None
            continue
        m = match_samples(gs, hs, params.max_match_dist, params.metric, params.matcher)
        out[c] = len(m) / len(gs)
    return out


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class CountyEval:
    county_id: str
    precision: float
    recall: float
    f1: float
    ri_at_k: float | None
    length_g_km: float
    length_h_km: float
    rel_length_err: float
    rel_density_err: float
    n_samples_g: int
    n_samples_h: int
    n_matched: int
    class_recall: dict[int, float | None] = field(default_factory=dict)


@dataclass
class EvalReport:
    counties: list[CountyEval]
    precision: float
    recall: float
    f1: float
    ri_at_k: float
    mrl: float
    mrd: float


def evaluate_county(
    county_id: str,
    g: RoadGraph,
    h: RoadGraph,
    area=1.0,
    params: SamplingParams = SamplingParams(),
    simplify: bool = True,
) -> CountyEval:
    """Score extracted graph ``h`` against ground truth ``g`` for one county.

    With ``simplify`` both graphs are reduced to straight segments between
    terminal nodes before sampling.
    """
    gg = simplify_to_segments(g) if simplify else g
    hh = simplify_to_segments(h) if simplify else h
    gs = sample_points(gg, params.sample_interval, params.metric)
    hs = sample_points(hh, params.sample_interval, params.metric)
    m = match_samples(gs, hs, params.max_match_dist, params.metric, params.matcher)
    p, r, f = prf1(m, gs, hs)
    lg, lh = total_length_km(g), total_length_km(h)
    ag, ah = _area_pair(area)
    rl = abs(lg - lh) / lg if lg > 0 else float("nan")
    rd = abs(lg / ag - lh / ah) / (lg / ag) if lg > 0 else float("nan")
    cr = per_class_recall(gg, hh, params) if gg.is_classed else {}
    return CountyEval(
        county_id, p, r, f, ri_at_k(g, h, params), lg, lh, rl, rd, len(gs), len(hs), len(m), cr,
    )


def aggregate(counties: list[CountyEval]) -> EvalReport:
    def mean(vals):
        vals = [v for v in vals if v is not None and not math.isnan(v)]
        return float(np.mean(vals)) if vals else float("nan")

    return EvalReport(
        counties,
        precision=mean(c.precision for c in counties),
        recall=mean(c.recall for c in counties),
        f1=mean(c.f1 for c in counties),
        ri_at_k=mean(c.ri_at_k for c in counties),
        mrl=mean(c.rel_length_err for c in counties),
        mrd=mean(c.rel_density_err for c in counties),
    )


REPORT_COLUMNS = [
    "county_id", "precision", "recall", "f1", "ri_at_k", "mrl", "mrd",
    "length_g_km", "length_h_km", "n_samples_g", "n_samples_h", "n_matched",
    *(f"recall_c{c}" for c in range(1, N_CLASSES + 1)),
]


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_report(path: Path, report: EvalReport) -> None:
    """One row per county, then an ``ALL`` row of cross-county means."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for c in report.counties:
            w.writerow([_fmt(v) for v in (
                c.county_id, c.precision, c.recall, c.f1, c.ri_at_k, c.rel_length_err, c.rel_density_err,
                c.length_g_km, c.length_h_km, c.n_samples_g, c.n_samples_h, c.n_matched,
                *(c.class_recall.get(k) for k in range(1, N_CLASSES + 1)),
            )])
        classes = {
            k: [c.class_recall.get(k) for c in report.counties if c.class_recall.get(k) is not None]
            for k in range(1, N_CLASSES + 1)
        }
        w.writerow([_fmt(v) for v in (
            "ALL", report.precision, report.recall, report.f1, report.ri_at_k, report.mrl, report.mrd,
            sum(c.length_g_km for c in report.counties), sum(c.length_h_km for c in report.counties),
            sum(c.n_samples_g for c in report.counties), sum(c.n_samples_h for c in report.counties),
            sum(c.n_matched for c in report.counties),
            *((float(np.mean(v)) if v else None) for v in classes.values()),
        )])
