"""``mipdqn`` command line.

Exit codes: 0 success, 2 configuration or input error, 3 solver error,
4 infeasible dispatch or schedule.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import bench
from .config import BenchConfig, load_config
from .errors import (
    CheckpointError,
    DomainError,
    InfeasibleError,
    SizeError,
    SolverError,
    TrainingDivergedError,
    ValidationError,
)
from .mip.backends import BACKENDS
from .profiles import synthesize, write_csv

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 2, 3, 4


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [_seed(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of seeds, got {text!r}") from None


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=_seed, help="random seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory or file")
    common.add_argument("--backend", choices=sorted(BACKENDS), help="MIP backend (MIPDQN_SOLVER overrides)")
    common.add_argument("--days", type=int, help="number of days to use")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mipdqn", description="Q-learning microgrid dispatch executed as a MIP.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train agents and write learning curves")
    t.add_argument("--sigma2", type=_floats, help="unbalance penalty values, e.g. 20,50,100")
    t.add_argument("--seeds", type=_ints, help="several seeds, e.g. 0,1,2,3,4")
    t.add_argument("--epochs", type=int, help="override the number of training episodes")

    for name, text in (("evaluate", "dispatch the test days and compare with the oracle"),
                       ("compare", "evaluate plus the unconstrained policy baseline"),
                       ("large-case", "train and evaluate on the three-storage system")):
        c = sub.add_parser(name, parents=[common], help=text)
        c.add_argument("--checkpoint", type=Path, help="agent directory or q_net.json")
        if name == "large-case":
            c.add_argument("--epochs", type=int, help="override the number of training episodes")

    e = sub.add_parser("export-mip", parents=[common], help="write the max-Q model of one state as an LP file")
    e.add_argument("--checkpoint", type=Path)
    e.add_argument("--state", type=Path, required=True, help="JSON with t, pv, load, price, dg_prev, soc")

    sub.add_parser("synth-data", parents=[common], help="write synthetic daily profiles as CSV")
    return p


def _config(args) -> BenchConfig:
    bc = load_config(args.config) if args.config else BenchConfig()
    if args.seed is not None:
        bc = replace(bc, seeds=(args.seed,), training=replace(bc.training, seed=args.seed),
                     data=replace(bc.data, synth_seed=args.seed) if args.command == "synth-data" else bc.data)
    if getattr(args, "epochs", None):
        bc = replace(bc, training=replace(bc.training, epochs=args.epochs))
    if args.backend:
        bc = replace(bc, bench=replace(bc.bench, backend=args.backend))
    if args.days is not None and args.days < 1:
        raise ValidationError("--days must be positive")
    return bc


def _print_report(report: bench.RunReport) -> None:
    for a in report.aggregates():
        line = (f"{a.algorithm:22s} days={a.n_days:3d} cost={a.total_cost:14.2f} "
                f"mean_dP={a.mean_unbalance:10.4f} max_residual={a.max_residual:.2e} time={a.total_time_s:8.2f}s")
        if a.error_pct is not None:
            line += f" error={a.error_pct:7.2f}%"
        print(line)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        bc = _config(args)
        out = args.out or bc.bench.out
        if args.command == "synth-data":
            days = synthesize(bc.data.synth_seed, args.days or bc.data.n_days)
            path = out if out.suffix == ".csv" else out / "profiles.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            write_csv(path, days)
            print(f"wrote {len(days)} days to {path}")
        elif args.command == "train":
            dirs = bench.cmd_train(bc, out, args.sigma2, args.seeds)
            for (s2, seed), d in dirs.items():
                print(f"sigma2={s2:g} seed={seed}: {d}")
        elif args.command == "evaluate":
            _print_report(bench.cmd_evaluate(bc, out, args.checkpoint, args.days))
        elif args.command == "compare":
            _print_report(bench.cmd_compare(bc, out, args.checkpoint, args.days))
        elif args.command == "large-case":
            _print_report(bench.cmd_large_case(bc, out, args.checkpoint, args.days, seed=args.seed))
        elif args.command == "export-mip":
            path = out if out.suffix == ".lp" else out / "dispatch.lp"
            bench.cmd_export_mip(bc, args.state, path, args.checkpoint)
            print(f"wrote {path}")
        return EXIT_OK
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverError, SizeError, TrainingDivergedError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValidationError, DomainError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
