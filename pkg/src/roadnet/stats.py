"""
County-level socioeconomic analyses on road statistics: power-law scaling
fit, indicator regressions, population deciles, regional growth, treatment
group division and the two-way fixed-effects difference-in-differences.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

REGIONS = ("western", "central", "eastern", "northeastern")
INDICATORS = ("population", "gdp", "sse", "balance", "road_length_km", "area_km2")
POPULATION_UNITS = {"persons": 1e-3, "thousand": 1.0, "million": 1e3}


class InsufficientDataError(ValueError):
    pass


class UndefinedFitError(ValueError):
    """Regression with zero variance in the regressor or the response."""


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class CountyRecord:
    county_id: str
    region: str
    year: int
    population: float  # thousand people
    gdp: float  # billion CNY
    sse: float
    balance: float
    road_length_km: float
    area_km2: float

    def __post_init__(self):
        if self.region not in REGIONS:
            raise ValueError(f"{self.county_id}: unknown region {self.region!r}")
        if not self.population > 0:
            raise ValueError(f"{self.county_id}: population must be positive")
        if not self.area_km2 > 0:
            raise ValueError(f"{self.county_id}: area must be positive")
        if self.road_length_km < 0:
            raise ValueError(f"{self.county_id}: negative road length")

    @property
    def rpc_m(self) -> float:
        """Road length per capita in metres per person."""
        return self.road_length_km * 1000.0 / (self.population * 1000.0)


@dataclass(frozen=True)
class DidSpec:
    metric: str = "ARL"
    control_quantile: float = 0.5
    treatment_quantile: float = 0.4
    pre_year: int = 2017
    post_year: int = 2021

    def __post_init__(self):
        if self.metric not in ("ARL", "RRL", "RRPC"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if not (0 < self.control_quantile and 0 < self.treatment_quantile):
            raise ValueError("quantiles must be positive")
        if self.control_quantile + self.treatment_quantile > 1 + 1e-12:
            raise ValueError("control + treatment quantiles exceed 1")
        if self.post_year <= self.pre_year:
            raise ValueError("post_year must follow pre_year")


# ---------------------------------------------------------------------------
# Least squares
# ---------------------------------------------------------------------------


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Slope, intercept and R^2 of y on x."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    syy = float(((y - ym) ** 2).sum())
    if sxx == 0:
        raise UndefinedFitError("regressor is constant")
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    intercept = ym - slope * xm
    if syy == 0:
        raise UndefinedFitError("response is constant; R^2 undefined")
    ss_res = float(((y - intercept - slope * x) ** 2).sum())
    return slope, float(intercept), 1.0 - ss_res / syy


@dataclass(frozen=True)
class ScalingFit:
    c: float
    z: float
    r2: float
    n: int


def fit_scaling_law(records: Sequence[CountyRecord]) -> ScalingFit:
    """Fit road_length = c * population**z by OLS in log-log space."""
    usable = []
    for r in records:
        if r.population > 0 and r.road_length_km > 0:
            usable.append(r)
        else:
            logger.warning("county %s rejected from scaling fit (non-positive value)", r.county_id)
    if len(usable) < 3:
        raise InsufficientDataError(f"scaling fit needs >= 3 usable records, got {len(usable)}")
    lx = np.log([r.population for r in usable])
    ly = np.log([r.road_length_km for r in usable])
    z, logc, r2 = _ols(lx, ly)
    return ScalingFit(math.exp(logc), z, r2, len(usable))


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float
    n: int


def correlate(records: Sequence[CountyRecord], indicator: str) -> LinearFit:
    """OLS of road length on ``indicator``."""
    if indicator not in INDICATORS:
        raise ValueError(f"unknown indicator {indicator!r}")
    if len(records) < 3:
        raise InsufficientDataError("correlation needs >= 3 records")
    x = [getattr(r, indicator) for r in records]
    y = [r.road_length_km for r in records]
    s, i, r2 = _ols(np.asarray(x), np.asarray(y))
    return LinearFit(s, i, r2, len(records))


# ---------------------------------------------------------------------------
# Descriptive summaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecileRow:
    decile: int
    n: int
    mean_rl_km: float
    mean_rpc_m: float


def decile_summary(records: Sequence[CountyRecord]) -> list[DecileRow]:
    """Population deciles (1 = least populous) with mean RL and RPC.

    When the count is not divisible by ten, the lower deciles take one
    extra county each.
    """
    n = len(records)
    if n < 10:
        raise InsufficientDataError(f"decile summary needs >= 10 records, got {n}")
    ordered = sorted(records, key=lambda r: (r.population, r.county_id))
    base, extra = divmod(n, 10)
    rows, start = [], 0
    for d in range(10):
        size = base + (1 if d < extra else 0)
        grp = ordered[start:start + size]
        start += size
        rows.append(DecileRow(
            d + 1, size,
            math.fsum(r.road_length_km for r in grp) / size,
            math.fsum(r.rpc_m for r in grp) / size,
        ))
    return rows


def _pair_epochs(records: Iterable[CountyRecord], t1: int, t2: int) -> list[tuple[CountyRecord, CountyRecord]]:
    by_id: dict[str, dict[int, CountyRecord]] = defaultdict(dict)
    for r in records:
        by_id[r.county_id][r.year] = r
    pairs = []
    for cid in sorted(by_id):
        ep = by_id[cid]
        if t1 in ep and t2 in ep:
            pairs.append((ep[t1], ep[t2]))
        else:
            logger.warning("county %s lacks year %s or %s; excluded", cid, t1, t2)
    return pairs


@dataclass(frozen=True)
class RegionGrowth:
    region: str
    n: int
    mean_rl_growth: float
    mean_rpc_growth: float


def regional_growth(records: Sequence[CountyRecord], t1: int, t2: int) -> list[RegionGrowth]:
    """Per-region mean of (X_t2 - X_t1) / X_t2 for road length and RPC."""
    acc: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for a, b in _pair_epochs(records, t1, t2):
        if b.road_length_km <= 0:
            logger.warning("county %s has zero road length in %s; excluded", b.county_id, t2)
            continue
        acc[b.region].append((
            (b.road_length_km - a.road_length_km) / b.road_length_km,
            (b.rpc_m - a.rpc_m) / b.rpc_m,
        ))
    out = []
    for reg in REGIONS:
        if acc.get(reg):
            g = np.asarray(acc[reg])
            out.append(RegionGrowth(reg, len(g), float(g[:, 0].mean()), float(g[:, 1].mean())))
    return out


# ---------------------------------------------------------------------------
# Difference-in-differences
# ---------------------------------------------------------------------------


def growth_metric(a: CountyRecord, b: CountyRecord, metric: str) -> float | None:
    """ARL, RRL or RRPC between epochs ``a`` (t1) and ``b`` (t2); None if undefined."""
    if metric == "ARL":
        return b.road_length_km - a.road_length_km
    if b.road_length_km <= 0:
        return None
    if metric == "RRL":
        return (b.road_length_km - a.road_length_km) / b.road_length_km
    if metric == "RRPC":
        pc2 = b.road_length_km / b.population
        pc1 = a.road_length_km / a.population
        return (pc2 - pc1) / pc2
    raise ValueError(f"unknown metric {metric!r}")


def divide_groups(records: Sequence[CountyRecord], spec: DidSpec = DidSpec()) -> tuple[list[str], list[str]]:
    """Split counties into control (bottom share) and treatment (top share)
    by the chosen growth metric. Counties in between are discarded.

    With n usable counties, control is the first ``floor(cq * n)`` and
    treatment the last ``n - floor((1 - tq) * n)`` in ascending metric order,
    ties broken by county id.
    """
    scored = []
    for a, b in _pair_epochs(records, spec.pre_year, spec.post_year):
        m = growth_metric(a, b, spec.metric)
        if m is None:
            logger.warning("county %s: %s undefined (zero road length in %s); excluded", a.county_id, spec.metric, spec.post_year)
            continue
        scored.append((m, a.county_id))
    scored.sort()
    n = len(scored)
    n_ctrl = math.floor(spec.control_quantile * n + 1e-9)
    n_treat = n - math.floor((1 - spec.treatment_quantile) * n + 1e-9)
    control = [cid for _, cid in scored[:n_ctrl]]
    treatment = [cid for _, cid in scored[n - n_treat:]] if n_treat else []
    return control, treatment


@dataclass(frozen=True)
class DidResult:
    beta: float
    closed_form: float
    n_control: int
    n_treatment: int
    n_obs: int
    r2_within: float
    log_outcome: bool


def did_estimate(
    records: Sequence[CountyRecord],
    control: Sequence[str],
    treatment: Sequence[str],
    outcome: str,
    pre_year: int,
    post_year: int,
    log_outcome: bool = False,
) -> DidResult:
    """Two-way fixed-effects DiD: Y_it = beta * D_i * T_t + gamma_i + delta_t + e_it.

    Estimated by within (two-way demeaning) OLS on the balanced two-period
    panel; the estimate is checked against the 2x2 double difference of means.
    """
    if outcome not in INDICATORS:
        raise ValueError(f"unknown outcome {outcome!r}")
    if not control or not treatment:
        raise ValueError("both control and treatment groups must be non-empty")
    if set(control) & set(treatment):
        raise ValueError("a county is in both groups")
    cells = {(r.county_id, r.year): r for r in records}
    units = list(control) + list(treatment)
    years = (pre_year, post_year)
    y = np.empty((len(units), 2))
    for i, cid in enumerate(units):
        for t, yr in enumerate(years):
            rec = cells.get((cid, yr))
            if rec is None:
                raise ValueError(f"missing outcome for county {cid} in {yr}")
            v = float(getattr(rec, outcome))
            if log_outcome:
                if v <= 0:
                    raise ValueError(f"cannot log non-positive {outcome} for {cid} in {yr}")
                v = math.log(v)
            y[i, t] = v
    d = np.zeros((len(units), 2))
    d[len(control):, 1] = 1.0

    def within(a: np.ndarray) -> np.ndarray:
        return a - a.mean(axis=1, keepdims=True) - a.mean(axis=0, keepdims=True) + a.mean()

    yw, dw = within(y), within(d)
    sdd = float((dw ** 2).sum())
    beta = float((dw * yw).sum()) / sdd
    resid = yw - beta * dw
    syy = float((yw ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / syy if syy > 0 else float("nan")

    nc = len(control)
    closed = (y[nc:, 1].mean() - y[nc:, 0].mean()) - (y[:nc, 1].mean() - y[:nc, 0].mean())
    scale = max(1.0, float(np.abs(y).max()))
    if abs(beta - closed) > 1e-9 * scale:
        raise ArithmeticError(f"TWFE beta {beta} disagrees with double difference {closed}")
    return DidResult(beta, float(closed), nc, len(treatment), 2 * len(units), r2, log_outcome)


# ---------------------------------------------------------------------------
# Panel CSV
# ---------------------------------------------------------------------------

PANEL_COLUMNS = [f.name for f in fields(CountyRecord)]


def read_panel(path: Path) -> list[CountyRecord]:
    """Read counties.csv.

    An optional second row whose ``county_id`` cell is ``units`` declares the
    population unit (``persons``, ``thousand`` or ``million``); population is
    stored in thousands.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in PANEL_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        scale = 1.0
        out = []
        for lineno, row in enumerate(reader, start=2):
            if row["county_id"].strip().lower() == "units":
                unit = row["population"].strip().lower()
                if unit not in POPULATION_UNITS:
                    raise SchemaError(f"{path}: unknown population unit {unit!r}")
                scale = POPULATION_UNITS[unit]
                continue
            try:
                out.append(CountyRecord(
                    county_id=row["county_id"].strip(),
                    region=row["region"].strip().lower(),
                    year=int(row["year"]),
                    population=float(row["population"]) * scale,
                    gdp=float(row["gdp"]),
                    sse=float(row["sse"]),
                    balance=float(row["balance"]),
                    road_length_km=float(row["road_length_km"]),
                    area_km2=float(row["area_km2"]),
                ))
            except (TypeError, ValueError) as exc:
                bad = next((c for c in PANEL_COLUMNS if not _parses(c, row.get(c))), None)
                where = f" column {bad!r}" if bad else ""
                raise SchemaError(f"{path}: line {lineno}{where}: {exc}") from None
    return out


def _parses(col: str, v) -> bool:
    if v is None:
        return False
    if col in ("county_id", "region"):
        return bool(v.strip())
    try:
        int(v) if col == "year" else float(v)
    except ValueError:
        return False
    return True


def join_road_stats(records: Sequence[CountyRecord], stats_rows: Iterable[dict]) -> list[CountyRecord]:
    """Replace road_length_km from extraction sidecar rows keyed by (county_id, year)."""
    lengths = {(str(r["county_id"]), int(r["year"])): float(r["total_length_km"]) for r in stats_rows}
    out = []
    for r in records:
        key = (r.county_id, r.year)
        if key in lengths:
            r = CountyRecord(**{**r.__dict__, "road_length_km": lengths[key]})
        out.append(r)
    return out


def write_rows(path: Path, header: list[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row])
