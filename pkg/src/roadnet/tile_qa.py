"""Tile screening: Laplacian-variance noise test, mean-intensity cloud test,
and nearest-epoch substitution for rejected tiles."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .raster import TileCoord, TileImage

logger = logging.getLogger(__name__)


class Verdict(str, Enum):
    VALID = "valid"
    NOISY = "noisy"
    CLOUDY = "cloudy"


@dataclass(frozen=True)
class QaThresholds:
    var_lap_max: float = 10000.0
    mean_int_max: float = 0.45

    def __post_init__(self):
        if not self.var_lap_max > 0:
            raise ValueError("var_lap_max must be positive")
        if not 0 < self.mean_int_max < 1:
            raise ValueError("mean_int_max must lie in (0, 1)")


@dataclass(frozen=True)
class TileStatus:
    verdict: Verdict
    var_lap: float
    mean_int: tuple[float, float, float]


def _laplacian(channel: np.ndarray) -> np.ndarray:
    # 4-neighbour stencil, reflect-101 borders (numpy "reflect" mode)
    p = np.pad(channel.astype(np.float64), 1, mode="reflect")
    return p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * p[1:-1, 1:-1]


def laplacian_variance(img: TileImage | np.ndarray) -> float:
    """Mean over the three channels of the population variance of the
    channel's discrete Laplacian."""
    px = img.pixels if isinstance(img, TileImage) else np.asarray(img)
    if px.size == 0:
        raise ValueError("empty image")
    variances = [float(_laplacian(px[:, :, z]).var()) for z in range(3)]
    return sum(variances) / 3.0


def mean_channel_intensity(img: TileImage | np.ndarray) -> tuple[float, float, float]:
    px = img.pixels if isinstance(img, TileImage) else np.asarray(img)
    if px.size == 0:
        raise ValueError("empty image")
    m = px.reshape(-1, 3).astype(np.float64).mean(axis=0) / 255.0
    return (float(m[0]), float(m[1]), float(m[2]))


def verdict_for(var_lap: float, mean_int: tuple[float, float, float], t: QaThresholds) -> Verdict:
    if var_lap > t.var_lap_max:
        return Verdict.NOISY
    # clear-sky tiles have at least one dark channel
    if min(mean_int) < t.mean_int_max:
        return Verdict.VALID
    return Verdict.CLOUDY


def classify_tile(img: TileImage, t: QaThresholds = QaThresholds()) -> TileStatus:
    v = laplacian_variance(img)
    m = mean_channel_intensity(img)
    return TileStatus(verdict_for(v, m, t), v, m)


# ---------------------------------------------------------------------------
# Temporal interpolation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubstitutionPlan:
    """Which epoch's mask each epoch of one tile should use.

    ``sources[year]`` is the epoch whose mask is used for ``year``; it equals
    ``year`` for valid epochs. ``missing`` is set when no epoch is valid, in
    which case ``sources`` is empty.
    """

    sources: dict[int, int]
    missing: bool = False

    def is_interpolated(self, year: int) -> bool:
        return not self.missing and self.sources.get(year, year) != year


def _is_valid(s) -> bool:
    if isinstance(s, TileStatus):
        return s.verdict == Verdict.VALID
    if isinstance(s, Verdict):
        return s == Verdict.VALID
    if isinstance(s, str):
        return s == Verdict.VALID.value
    return bool(s)


def interpolate_missing(series: Mapping[int, object], tile: TileCoord | None = None) -> SubstitutionPlan:
    """Assign each invalid epoch the mask of the temporally nearest valid one.

    ``series`` maps year to a ``TileStatus``, ``Verdict``, verdict string or
    a plain availability flag. Ties go to the earlier epoch.
    """
    valid = sorted(y for y, s in series.items() if _is_valid(s))
    if not valid:
        logger.warning("tile %s has no valid epoch; excluded from canvas", tile)
        return SubstitutionPlan({}, missing=True)
    sources = {}
    for year in sorted(series):
        if year in valid:
            sources[year] = year
        else:
            sources[year] = min(valid, key=lambda v: (abs(v - year), v))
    return SubstitutionPlan(sources)


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

QA_COLUMNS = ["tile_z", "tile_x", "tile_y", "year", "var_lap", "mean_r", "mean_g", "mean_b", "verdict"]


def write_qa_csv(path: Path, rows: Iterable[tuple[TileCoord, int, TileStatus]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(QA_COLUMNS)
        for coord, year, st in rows:
            w.writerow([
                coord.z, coord.x, coord.y, year,
                f"{st.var_lap:.6f}", *(f"{m:.6f}" for m in st.mean_int), st.verdict.value,
            ])


def read_qa_csv(path: Path) -> list[tuple[TileCoord, int, TileStatus]]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            coord = TileCoord(int(row["tile_x"]), int(row["tile_y"]), int(row["tile_z"]))
            st = TileStatus(
                Verdict(row["verdict"]),
                float(row["var_lap"]),
                (float(row["mean_r"]), float(row["mean_g"]), float(row["mean_b"])),
            )
            out.append((coord, int(row["year"]), st))
    return out
