"""Command-line entry point: ``roadnet {qa,extract,eval,stats,run-all}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import CONFIG_ENV, ConfigError, load_config
from .graphio import GeoJSONError
from .pipeline import ANALYSES, DataError, run_all, run_eval, run_extract, run_qa, run_stats
from .raster import RasterError
from .stats import SchemaError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

logger = logging.getLogger("roadnet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


EVAL_HELP = """\
Writes one row per county followed by an ALL row.
Columns, in order: county_id, precision, recall, f1, ri_at_k, mrl, mrd,
length_g_km, length_h_km, n_samples_g, n_samples_h, n_matched,
recall_c1 .. recall_c10. In county rows mrl and mrd are that county's
relative length and density errors; the ALL row holds their means, the mean
precision/recall/f1/RI over counties and summed lengths and counts. Empty
cells mean undefined (no intersections, or no truth edges of that class).
"""


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help=f"YAML config file (default: ${CONFIG_ENV}, then built-in defaults)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key, e.g. --set morph.kernel_size=9 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="roadnet", description="Road network extraction, evaluation and county statistics.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("qa", parents=[common], help="classify tiles of one county-year")
    q.add_argument("county")
    q.add_argument("year", type=int)

    e = sub.add_parser("extract", parents=[common], help="extract the road graph of one county-year")
    e.add_argument("county")
    e.add_argument("year", type=int)

    ev = sub.add_parser("eval", parents=[common], help="evaluate an extracted graph against truth",
                        description=EVAL_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    ev.add_argument("extracted", type=Path)
    ev.add_argument("truth", type=Path)
    ev.add_argument("--county", default="county", help="county id for the report row and area lookup")
    ev.add_argument("-o", "--output", type=Path, help="report path (default: <output_dir>/eval_report.csv)")

    s = sub.add_parser("stats", parents=[common], help="run county statistics on a panel CSV")
    s.add_argument("panel", type=Path, nargs="?", help="panel CSV (default: panel_csv from config)")
    s.add_argument("--analysis", action="append", metavar="NAME",
                   help=f"one of {', '.join(ANALYSES)} (repeatable; default: config stats.analyses)")

    sub.add_parser("run-all", parents=[common], help="QA, extraction, evaluation and statistics for every county")
    return p


def _dispatch(args) -> dict:
    cfg = load_config(args.config, args.overrides)
    if args.command == "qa":
        r = run_qa(cfg, args.county, args.year)
        return {"output": str(r.outputs[0]), "tally": r.tally}
    if args.command == "extract":
        r = run_extract(cfg, args.county, args.year)
        return {"outputs": [str(p) for p in r.outputs], "mask_sources": r.mask_sources,
                "node_count": r.info["node_count"], "edge_count": r.info["edge_count"]}
    if args.command == "eval":
        for f in (args.extracted, args.truth):
            if not f.is_file():
                raise DataError(f"{f} not found")
        r = run_eval(cfg, [(args.county, args.extracted, args.truth)], args.output)
        return {"output": str(r.outputs[0]), **r.info}
    if args.command == "stats":
        bad = [a for a in args.analysis or [] if a not in ANALYSES]
        if bad:
            raise UsageError(f"unknown analysis {bad[0]!r}; choose from {', '.join(ANALYSES)}")
        panel = args.panel or cfg.panel_csv
        if panel is None:
            raise UsageError("no panel CSV given and panel_csv is not configured")
        if not Path(panel).is_file():
            raise DataError(f"panel {panel} not found")
        r = run_stats(cfg, panel, args.analysis)
        return {"outputs": [str(p) for p in r.outputs]}
    if args.command == "run-all":
        return {"manifest": str(run_all(cfg))}
    raise UsageError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = _dispatch(args)
    except (UsageError, ConfigError) as exc:
        print(f"roadnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, GeoJSONError, SchemaError, RasterError, FileNotFoundError) as exc:
        print(f"roadnet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        logger.exception("internal error")
        return EXIT_INTERNAL
    print(json.dumps(result, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
