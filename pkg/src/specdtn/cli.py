"""Command-line harness for the experiment drivers.

    specdtn <subcommand> [--config FILE] [--out CSV] [--mode stored|econ]
                         [--p INT] [--q INT] [--n INT] [--nref INT]
                         [--reps INT]

Subcommands: speed, varcoef, concentrated, discontinuous, lshape-corner,
parabolic, verify. The config file is a JSON document with the same keys
as the flags plus a nested "params" object; flags override file values.
Exit code 0 on success, nonzero with a diagnostic on any hard solver
error or failed verification.
"""

from __future__ import annotations

import argparse
import math
import sys

from .archive import ArchiveError
from .experiments import EXPERIMENTS, ExperimentConfig, ROW_COLUMNS, run_experiment
from .geometry import MeshConformityError
from .leaf import LeafSingularError
from .solver import MergeSingularError

HARD_ERRORS = (LeafSingularError, MergeSingularError, MeshConformityError,
               ArchiveError, ValueError)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specdtn",
        description="multidomain spectral collocation direct solver experiments")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in sorted(EXPERIMENTS):
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="CSV output path")
        p.add_argument("--mode", choices=("stored", "econ"))
        p.add_argument("--p", type=int, help="Chebyshev order per leaf")
        p.add_argument("--q", type=int, help="Gauss nodes per leaf edge")
        p.add_argument("--n", type=int, help="leaves per side")
        p.add_argument("--nref", type=int, help="refinement rounds")
        p.add_argument("--reps", type=int, help="timing repetitions")
    return parser


def _config_from(args) -> ExperimentConfig:
    if args.config:
        config = ExperimentConfig.from_file(args.config)
        config.experiment = args.experiment
    else:
        config = ExperimentConfig(experiment=args.experiment)
    if args.out is not None:
        config.out = args.out
    if args.mode is not None:
        config.mode = args.mode
    if args.p is not None:
        config.p = args.p
    if args.q is not None:
        config.q = args.q
    if args.n is not None:
        config.n = args.n
    if args.nref is not None:
        config.n_ref = args.nref
    if args.reps is not None:
        config.repetitions = args.reps
    return config


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    config = _config_from(args)
    try:
        rows = run_experiment(config)
    except HARD_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if config.experiment == "verify":
        return 0 if not math.isnan(rows[0].linf_error) else 1
    print(",".join(ROW_COLUMNS))
    for row in rows:
        print(",".join(str(v) for v in row.as_list()))
    if config.out:
        print(f"wrote {config.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
