"""Command line entry point: ``housesweep <command> [options]``.

Commands ``sweep``, ``phases``, ``m1``, ``walks`` and ``clonal`` run presets
(or a JSON config) and write ``<experiment>.csv`` / ``<experiment>.json`` to
the output directory; ``report`` re-evaluates verdicts from those files.
The exit code is 0 only if every asserted verdict is PASS.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .harness import (COMMAND_PRESETS, OUT_ENV, PRESETS, ExperimentConfig, ResultTable,
                      convergence_report, preset, run_experiment)

DEFAULT_OUT = "housesweep-out"


def _grid(text: str) -> list[int]:
    try:
        return [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}: {exc}") from None


def _add_run_args(p: argparse.ArgumentParser, command: str) -> None:
    choices = COMMAND_PRESETS[command]
    p.add_argument("--preset", choices=choices, default=None,
                   help=f"preset to run (default: all of {', '.join(choices)})")
    p.add_argument("--config", type=Path, help="JSON experiment config (overrides --preset)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--grid", type=_grid, help="comma-separated population sizes, e.g. 1e3,1e4,1e5")
    p.add_argument("--replicates", type=int, help="replicates per grid point")
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--threads", type=int, default=None, help="worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="housesweep",
                                     description="Selective sweeps under moderate selection.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"sweep": "fixation time and distance to the limiting house",
             "phases": "the five phases of a sweep via branching approximations",
             "m1": "M1 distance of rescaled branching processes to their limits",
             "walks": "drawdowns of embedded walks and the log-LIL statistic",
             "clonal": "multi-type Moran model against interacting trajectories"}
    for name, text in helps.items():
        _add_run_args(sub.add_parser(name, help=text), name)
    rep = sub.add_parser("report", help="verdicts from previously written results")
    rep.add_argument("--out", help="directory holding <experiment>.csv/.json")
    rep.add_argument("--preset", action="append", help="restrict to these experiments")
    parser.add_argument("--list-presets", action="store_true", help=argparse.SUPPRESS)
    return parser


def _out_dir(arg: str | None) -> str:
    return arg or os.environ.get(OUT_ENV) or DEFAULT_OUT


def _configs(args) -> list[ExperimentConfig]:
    over = dict(seed=args.seed, N=args.grid, replicates=args.replicates,
                out=_out_dir(args.out), threads=args.threads)
    if args.config is not None:
        d = json.loads(args.config.read_text())
        d.update({k: v for k, v in over.items() if v is not None})
        return [ExperimentConfig.from_dict(d)]
    names = [args.preset] if args.preset else COMMAND_PRESETS[args.command]
    return [preset(n, **over) for n in names]


def _print_verdicts(verdicts) -> bool:
    ok = True
    for v in verdicts:
        meds = ", ".join(f"{m:.4g}" for m in v.medians)
        print(f"{v.verdict:6s} {v.experiment}/{v.stat}: medians [{meds}] ({v.reason})")
        ok &= v.verdict in ("PASS", "REPORT")
    return ok


def _report(args) -> int:
    out = Path(_out_dir(args.out))
    files = sorted(out.glob("*.json"))
    if args.preset:
        files = [f for f in files if f.stem in args.preset]
    if not files:
        print(f"no results in {out}", file=sys.stderr)
        return 1
    ok = True
    for f in files:
        doc = json.loads(f.read_text())
        cfg = ExperimentConfig.from_dict(doc["config"])
        table = ResultTable.from_csv(f.with_suffix(".csv").read_text(), cfg)
        ok &= _print_verdicts(convergence_report([table]))
    return 0 if ok else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        return _report(args)
    ok = True
    for cfg in _configs(args):
        table = run_experiment(cfg)
        print(f"{cfg.experiment}: wrote {Path(cfg.out) / (cfg.experiment + '.csv')}")
        if table.rows:
            ok &= _print_verdicts(convergence_report([table]))
        else:
            ok = False
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
