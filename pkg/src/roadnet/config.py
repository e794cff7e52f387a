"""Pipeline configuration: YAML file, dotted-key overrides, validation."""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .evaluate import SamplingParams
from .extract import ExtractParams
from .morphology import MorphParams, SegmentParams
from .tile_qa import QaThresholds

CONFIG_ENV = "ROADNET_CONFIG"


class ConfigError(ValueError):
    pass


def default_dict() -> dict[str, Any]:
    text = resources.files("roadnet").joinpath("default_config.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def apply_override(d: dict, assignment: str) -> None:
    """Apply ``a.b.c=value``; the value is parsed as YAML."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not key=value")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = d
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown config section {p!r} in {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = yaml.safe_load(raw)


@dataclass
class StatsOptions:
    analyses: list[str]
    pre_year: int
    post_year: int
    did_metrics: list[str]
    did_outcomes: list[str]
    control_quantile: float
    treatment_quantile: float
    log_outcome: bool


@dataclass
class PipelineConfig:
    base_dir: Path
    tile_root: Path
    mask_root: Path | None
    truth_root: Path | None
    counties_file: Path
    panel_csv: Path | None
    output_dir: Path
    zoom: int
    tile_size: int
    years: list[int]
    parallelism: int
    seed: int
    qa: QaThresholds
    segment: SegmentParams
    morph: MorphParams
    extract: ExtractParams
    sampling: SamplingParams
    simplify_eval: bool
    stats: StatsOptions
    raw: dict = field(repr=False, default_factory=dict)

    def snapshot(self) -> dict:
        return copy.deepcopy(self.raw)


def _path(base: Path, v) -> Path | None:
    if v is None or v == "":
        return None
    p = Path(v)
    return p if p.is_absolute() else (base / p)


def build(d: dict, base_dir: Path) -> PipelineConfig:
    try:
        cfg = PipelineConfig(
            base_dir=base_dir,
            tile_root=_path(base_dir, d["tile_root"]),
            mask_root=_path(base_dir, d.get("mask_root")),
            truth_root=_path(base_dir, d.get("truth_root")),
            counties_file=_path(base_dir, d["counties_file"]),
            panel_csv=_path(base_dir, d.get("panel_csv")),
            output_dir=_path(base_dir, d["output_dir"]),
            zoom=int(d["zoom"]),
            tile_size=int(d["tile_size"]),
            years=[int(y) for y in d["years"]],
            parallelism=max(1, int(d["parallelism"])),
            seed=int(d["seed"]),
            qa=QaThresholds(**d["qa"]),
            segment=SegmentParams(**d["segment"]),
            morph=MorphParams(**d["morph"]),
            extract=ExtractParams(**d["extract"]),
            sampling=SamplingParams(**d["sampling"]),
            simplify_eval=bool(d["eval"]["simplify"]),
            stats=StatsOptions(**d["stats"]),
            raw=copy.deepcopy(d),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None
    if not 0 <= cfg.zoom <= 30:
        raise ConfigError(f"zoom {cfg.zoom} out of range")
    if cfg.tile_size < 1:
        raise ConfigError("tile_size must be positive")
    return cfg


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> PipelineConfig:
    """Defaults, then the YAML file (argument, else ``$ROADNET_CONFIG``), then overrides."""
    d = default_dict()
    path = path or os.environ.get(CONFIG_ENV)
    base = Path.cwd()
    if path:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        user = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        unknown = set(user) - set(d)
        if unknown:
            raise ConfigError(f"{path}: unknown key(s) {', '.join(sorted(unknown))}")
        d = _merge(d, user)
        base = path.resolve().parent
    for o in overrides or []:
        apply_override(d, o)
    return build(d, base)


def validate_paths(cfg: PipelineConfig, need: tuple[str, ...]) -> None:
    for name in need:
        p = getattr(cfg, name)
        if p is None:
            raise ConfigError(f"{name} is not configured")
        if not Path(p).exists():
            raise ConfigError(f"{name} {p} does not exist")
