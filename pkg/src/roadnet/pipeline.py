"""
Stage runners behind the command line: tile QA, extraction, evaluation,
statistics, and the batch run that chains them and writes a manifest.

Layout on disk::

    <tile_root>/<year>/<z>/<x>/<y>.png      imagery
    <mask_root>/<year>/<z>/<x>/<y>.png      optional external masks
    <truth_root>/<county>_<year>.geojson    optional ground truth
"""

from __future__ import annotations

import contextlib
import csv
import hashlib
import json
import logging
import math
import os
import tempfile
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import graphio
from . import stats as st
from .config import PipelineConfig
from .evaluate import aggregate, evaluate_county, write_report
from .extract import extract_graph, graph_stats
from .graph import simplify_to_segments
from .morphology import baseline_segment, postprocess
from .raster import (
    BitCanvas, TileBBox, TileCoord, discover_tiles, mosaic, png_to_bits, read_tile_image, tile_path,
)
from .tile_qa import TileStatus, Verdict, classify_tile, interpolate_missing, write_qa_csv

logger = logging.getLogger(__name__)


class DataError(RuntimeError):
    """Input data missing or unusable."""


@dataclass(frozen=True)
class County:
    county_id: str
    area_km2: float
    bbox: TileBBox


def read_counties(path: Path, zoom: int) -> dict[str, County]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = ["county_id", "area_km2", "x_min", "y_min", "x_max", "y_max"]
        missing = [c for c in need if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        for row in reader:
            try:
                bbox = TileBBox(int(row["x_min"]), int(row["y_min"]), int(row["x_max"]), int(row["y_max"]), zoom)
                out[row["county_id"]] = County(row["county_id"], float(row["area_km2"]), bbox)
            except ValueError as exc:
                raise DataError(f"{path}: county {row.get('county_id')!r}: {exc}") from None
    return out


def get_county(cfg: PipelineConfig, county_id: str) -> County:
    if not Path(cfg.counties_file).is_file():
        raise DataError(f"counties file {cfg.counties_file} not found")
    counties = read_counties(cfg.counties_file, cfg.zoom)
    if county_id not in counties:
        raise DataError(f"county {county_id!r} not in {cfg.counties_file}")
    return counties[county_id]


@contextlib.contextmanager
def atomic_path(path: Path):
    """Yield a temporary sibling path that replaces ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# QA
# ---------------------------------------------------------------------------


@dataclass
class StageResult:
    stage: str
    county_id: str | None = None
    year: int | None = None
    inputs: list[Path] = field(default_factory=list)
    outputs: list[Path] = field(default_factory=list)
    tally: dict[str, int] = field(default_factory=dict)
    mask_sources: dict[str, str] = field(default_factory=dict)
    info: dict = field(default_factory=dict)
    seconds: float = 0.0


def _year_root(cfg: PipelineConfig, year: int) -> Path:
    return Path(cfg.tile_root) / str(year)


def classify_year(cfg: PipelineConfig, county: County, year: int) -> dict[TileCoord, TileStatus]:
    root = _year_root(cfg, year)
    if not root.is_dir():
        return {}
    return {c: classify_tile(read_tile_image(tile_path(root, c), c), cfg.qa) for c in discover_tiles(root, county.bbox)}


def run_qa(cfg: PipelineConfig, county_id: str, year: int) -> StageResult:
    t0 = time.perf_counter()
    if not Path(cfg.tile_root).is_dir():
        raise DataError(f"tile root {cfg.tile_root} does not exist")
    county = get_county(cfg, county_id)
    root = _year_root(cfg, year)
    coords = discover_tiles(root, county.bbox) if root.is_dir() else []
    if not coords:
        raise DataError(f"no tiles for county {county_id} in {root}")
    rows = []
    for c in coords:
        rows.append((c, year, classify_tile(read_tile_image(tile_path(root, c), c), cfg.qa)))
    out = Path(cfg.output_dir) / f"qa_{county_id}_{year}.csv"
    with atomic_path(out) as tmp:
        write_qa_csv(tmp, rows)
    tally = Counter(s.verdict.value for _, _, s in rows)
    return StageResult(
        "qa", county_id, year,
        inputs=[tile_path(root, c) for c in coords],
        outputs=[out],
        tally={v.value: tally.get(v.value, 0) for v in Verdict},
        seconds=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------


def build_masks(cfg: PipelineConfig, county: County, year: int) -> tuple[list[BitCanvas], dict[str, str], list[Path]]:
    """Per-tile masks for ``year``, substituting the nearest valid epoch for
    rejected tiles. Returns masks, per-tile source labels and files read."""
    years = sorted(set(cfg.years) | {year})
    status = {y: classify_year(cfg, county, y) for y in years}
    masks, sources, inputs = [], {}, []
    for coord in county.bbox.tiles():
        series = {y: status[y].get(coord, False) for y in years}
        if not any(series.values()):
            continue  # no imagery at all for this slot
        plan = interpolate_missing(series, coord)
        key = f"{coord.z}/{coord.x}/{coord.y}"
        if plan.missing:
            sources[key] = "missing"
            continue
        src = plan.sources[year]
        ext = tile_path(Path(cfg.mask_root) / str(src), coord) if cfg.mask_root else None
        if ext is not None and ext.is_file():
            bits = png_to_bits(ext)
            label = "external"
            inputs.append(ext)
        else:
            img_path = tile_path(_year_root(cfg, src), coord)
            bits = baseline_segment(read_tile_image(img_path, coord), cfg.segment).bits
            label = "baseline"
            inputs.append(img_path)
        if bits.shape != (cfg.tile_size, cfg.tile_size):
            raise DataError(f"mask for tile {key} has shape {bits.shape}")
        masks.append(BitCanvas(bits, coord, cfg.tile_size))
        sources[key] = "interpolated" if src != year else label
    return masks, sources, inputs


def run_extract(cfg: PipelineConfig, county_id: str, year: int) -> StageResult:
    t0 = time.perf_counter()
    if not Path(cfg.tile_root).is_dir():
        raise DataError(f"tile root {cfg.tile_root} does not exist")
    county = get_county(cfg, county_id)
    masks, sources, inputs = build_masks(cfg, county, year)
    if not masks:
        raise DataError(f"no usable masks for county {county_id} in {year}")
    canvas = mosaic(masks, county.bbox, cfg.tile_size)
    skel = postprocess(canvas, cfg.morph)
    g = extract_graph(skel, cfg.extract)
    seg = simplify_to_segments(g)

    out_dir = Path(cfg.output_dir)
    paths = {
        "graph": out_dir / f"graph_{county_id}_{year}.geojson",
        "segments": out_dir / f"segments_{county_id}_{year}.geojson",
        "stats": out_dir / f"road_stats_{county_id}_{year}.csv",
    }
    row = {"county_id": county_id, "year": year, **graph_stats(g, county.area_km2)}
    with atomic_path(paths["graph"]) as tmp:
        graphio.write_geojson(tmp, g)
    with atomic_path(paths["segments"]) as tmp:
        graphio.write_geojson(tmp, seg)
    with atomic_path(paths["stats"]) as tmp:
        graphio.write_stats_csv(tmp, [row])
    return StageResult(
        "extract", county_id, year,
        inputs=inputs,
        outputs=list(paths.values()),
        mask_sources=sources,
        info={**row, "segment_edges": len(seg.edges)},
        seconds=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def run_eval(cfg: PipelineConfig, pairs: list[tuple[str, Path, Path]], out: Path | None = None) -> StageResult:
    """Evaluate ``(county_id, extracted, truth)`` triples into one report."""
    t0 = time.perf_counter()
    areas = {}
    if cfg.counties_file and Path(cfg.counties_file).is_file():
        areas = {k: c.area_km2 for k, c in read_counties(cfg.counties_file, cfg.zoom).items()}
    results = []
    for county_id, ext_path, truth_path in pairs:
        h = graphio.read_geojson(ext_path)
        g = graphio.read_geojson(truth_path)
        area = areas.get(county_id, 1.0)
        results.append(evaluate_county(county_id, g, h, area, cfg.sampling, cfg.simplify_eval))
    report = aggregate(results)
    out = Path(out or Path(cfg.output_dir) / "eval_report.csv")
    with atomic_path(out) as tmp:
        write_report(tmp, report)
    return StageResult(
        "eval",
        inputs=[p for _, a, b in pairs for p in (Path(a), Path(b))],
        outputs=[out],
        info={"precision": report.precision, "recall": report.recall, "f1": report.f1,
              "ri_at_k": report.ri_at_k, "mrl": report.mrl, "mrd": report.mrd},
        seconds=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

ANALYSES = ("scaling", "correlation", "deciles", "regional", "did")


def _clean(v):
    if isinstance(v, float) and (math.isnan(v) or math.isinf(v)):
        return None
    return v


def run_stats(
    cfg: PipelineConfig,
    panel: Path,
    analyses: list[str] | None = None,
    road_stats: list[dict] | None = None,
) -> StageResult:
    t0 = time.perf_counter()
    analyses = list(analyses or cfg.stats.analyses)
    unknown = [a for a in analyses if a not in ANALYSES]
    if unknown:
        raise ValueError(f"unknown analysis {unknown[0]!r}; choose from {', '.join(ANALYSES)}")
    records = st.read_panel(panel)
    if road_stats:
        records = st.join_road_stats(records, road_stats)
    years = sorted({r.year for r in records})
    out_dir = Path(cfg.output_dir)
    summary: dict = {}
    outputs = []

    def emit(name: str, header: list[str], rows: list) -> None:
        p = out_dir / f"stats_{name}.csv"
        with atomic_path(p) as tmp:
            st.write_rows(tmp, header, rows)
        outputs.append(p)

    if "scaling" in analyses:
        rows = []
        for y in years:
            recs = [r for r in records if r.year == y]
            for group in ("all", *st.REGIONS):
                sub = recs if group == "all" else [r for r in recs if r.region == group]
                try:
                    f = st.fit_scaling_law(sub)
                except (st.InsufficientDataError, st.UndefinedFitError) as exc:
                    logger.info("scaling %s %s skipped: %s", y, group, exc)
                    continue
                rows.append([y, group, f.n, f.c, f.z, f.r2])
                summary.setdefault("scaling", {}).setdefault(str(y), {})[group] = {"c": f.c, "z": f.z, "r2": f.r2, "n": f.n}
        emit("scaling", ["year", "group", "n", "c", "z", "r2"], rows)

    if "correlation" in analyses:
        rows = []
        for y in years:
            recs = [r for r in records if r.year == y]
            for ind in ("population", "gdp", "sse", "balance"):
                try:
                    f = st.correlate(recs, ind)
                except (st.InsufficientDataError, st.UndefinedFitError) as exc:
                    logger.info("correlation %s %s skipped: %s", y, ind, exc)
                    continue
                rows.append([y, ind, f.n, f.slope, f.intercept, f.r2])
                summary.setdefault("correlation", {}).setdefault(str(y), {})[ind] = {
                    "slope": f.slope, "intercept": f.intercept, "r2": f.r2}
        emit("correlation", ["year", "indicator", "n", "slope", "intercept", "r2"], rows)

    if "deciles" in analyses:
        rows = []
        for y in years:
            recs = [r for r in records if r.year == y]
            try:
                rows.extend([y, d.decile, d.n, d.mean_rl_km, d.mean_rpc_m] for d in st.decile_summary(recs))
            except st.InsufficientDataError as exc:
                logger.info("deciles %s skipped: %s", y, exc)
        emit("deciles", ["year", "decile", "n", "mean_rl_km", "mean_rpc_m"], rows)

    pre, post = cfg.stats.pre_year, cfg.stats.post_year
    if "regional" in analyses:
        rg = st.regional_growth(records, pre, post)
        emit("regional", ["region", "n", "mean_rl_growth", "mean_rpc_growth"],
             [[g.region, g.n, g.mean_rl_growth, g.mean_rpc_growth] for g in rg])
        summary["regional"] = {g.region: {"rl": g.mean_rl_growth, "rpc": g.mean_rpc_growth} for g in rg}

    if "did" in analyses:
        rows = []
        for metric in cfg.stats.did_metrics:
            spec = st.DidSpec(metric, cfg.stats.control_quantile, cfg.stats.treatment_quantile, pre, post)
            control, treatment = st.divide_groups(records, spec)
            for outcome in cfg.stats.did_outcomes:
                try:
                    res = st.did_estimate(records, control, treatment, outcome, pre, post, cfg.stats.log_outcome)
                except ValueError as exc:
                    logger.info("did %s/%s skipped: %s", metric, outcome, exc)
                    continue
                rows.append([metric, outcome, res.beta, res.closed_form, res.n_control, res.n_treatment, res.r2_within])
                summary.setdefault("did", {}).setdefault(metric, {})[outcome] = {
                    "beta": res.beta, "n_control": res.n_control, "n_treatment": res.n_treatment}
        emit("did", ["metric", "outcome", "beta", "double_difference", "n_control", "n_treatment", "r2_within"], rows)

    sp = out_dir / "stats_summary.json"
    with atomic_path(sp) as tmp:
        tmp.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    outputs.append(sp)
    return StageResult("stats", inputs=[Path(panel)], outputs=outputs, info=summary, seconds=time.perf_counter() - t0)


def _jsonable(o):
    if isinstance(o, dict):
        return {k: _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        return _clean(round(float(o), 12))
    if isinstance(o, np.integer):
        return int(o)
    return o


# ---------------------------------------------------------------------------
# Batch run
# ---------------------------------------------------------------------------


def _job(cfg: PipelineConfig, county_id: str, year: int) -> list[StageResult]:
    return [run_qa(cfg, county_id, year), run_extract(cfg, county_id, year)]


def run_all(cfg: PipelineConfig) -> Path:
    """QA and extraction for every (county, year), then evaluation and
    statistics when ground truth / a panel are configured. Returns the
    manifest path."""
    t0 = time.perf_counter()
    if not Path(cfg.tile_root).is_dir():
        raise DataError(f"tile root {cfg.tile_root} does not exist")
    if not Path(cfg.counties_file).is_file():
        raise DataError(f"counties file {cfg.counties_file} not found")
    counties = read_counties(cfg.counties_file, cfg.zoom)
    jobs = [(c, y) for c in sorted(counties) for y in cfg.years]
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    results: list[StageResult] = []
    if cfg.parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
            futs = [pool.submit(_job, cfg, c, y) for c, y in jobs]
            for f in futs:
                results.extend(f.result())
    else:
        for c, y in jobs:
            results.extend(_job(cfg, c, y))

    road_rows = [r.info for r in results if r.stage == "extract"]
    road_rows.sort(key=lambda r: (r["county_id"], r["year"]))
    rs_path = out_dir / "road_stats.csv"
    with atomic_path(rs_path) as tmp:
        graphio.write_stats_csv(tmp, road_rows)

    if cfg.truth_root:
        for y in cfg.years:
            pairs = []
            for c in sorted(counties):
                truth = Path(cfg.truth_root) / f"{c}_{y}.geojson"
                if truth.is_file():
                    pairs.append((c, out_dir / f"segments_{c}_{y}.geojson", truth))
            if pairs:
                results.append(run_eval(cfg, pairs, out_dir / f"eval_report_{y}.csv"))

    if cfg.panel_csv:
        results.append(run_stats(cfg, cfg.panel_csv, road_stats=road_rows))

    return write_manifest(cfg, results, [rs_path], time.perf_counter() - t0)


def write_manifest(cfg: PipelineConfig, results: list[StageResult], extra_outputs: list[Path], seconds: float) -> Path:
    base = Path(cfg.output_dir)

    def rel(p: Path) -> str:
        p = Path(p)
        try:
            return str(p.resolve().relative_to(Path(cfg.base_dir).resolve()))
        except ValueError:
            return str(p)

    tally = Counter()
    for r in results:
        tally.update(r.tally)
    stages = []
    for r in results:
        stages.append({
            "stage": r.stage,
            "county_id": r.county_id,
            "year": r.year,
            "inputs": {rel(p): sha256_file(p) for p in sorted(set(map(Path, r.inputs)))},
            "outputs": {rel(p): sha256_file(p) for p in r.outputs},
            "mask_sources": dict(sorted(r.mask_sources.items())),
            "tally": r.tally,
        })
    manifest = {
        "config": cfg.snapshot(),
        "stages": stages,
        "outputs": {rel(p): sha256_file(p) for p in extra_outputs},
        "qa_tally": {v.value: tally.get(v.value, 0) for v in Verdict},
        "timings": {
            "total_seconds": seconds,
            "stages": [{"stage": r.stage, "county_id": r.county_id, "year": r.year, "seconds": r.seconds} for r in results],
        },
    }
    path = base / "manifest.json"
    with atomic_path(path) as tmp:
        tmp.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path
