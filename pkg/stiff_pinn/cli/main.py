"""``stiff-pinn`` command-line interface."""

import argparse
import logging
import sys
from typing import List, Optional, Sequence

from .. import __version__
from ..common.config import find_default_config, load_config
from ..common.errors import (
    ConfigError,
    DifferentiationError,
    DimensionError,
    MechanismError,
    NumericalError,
    PartitionError,
)
from ..common.presets import EXPERIMENT_PRESETS
from .runner import ExperimentRunner, cmd_plot

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

EPILOG = """
Examples:
  # Full ROBER reference with BDF
  stiff-pinn simulate --mechanism builtin:rober --method bdf

  # Reduced ROBER with Dopri5 (B eliminated by its quasi-steady state)
  stiff-pinn simulate --preset rober-stiff --solver.system=reduced --solver.method=dopri5

  # QSS partition for POLLU
  stiff-pinn reduce --preset pollu-stiff

  # Stiff-PINN on ROBER, then score the checkpoint
  stiff-pinn train --preset rober-stiff --output-dir runs/rober
  stiff-pinn evaluate --preset rober-stiff --output-dir runs/rober

  # Architecture sweep on four worker processes
  stiff-pinn sweep --preset rober-stiff --jobs 4

  # Stiffness ratio along the trajectory and Dopri5/BDF step counts
  stiff-pinn stiffness --mechanism builtin:rober

  # Overlay reference and prediction
  stiff-pinn plot runs/trajectory.csv runs/rober/prediction.csv -o overlay.svg --logx

Presets:
  rober-stiff      ROBER, QSS = {B}, closed-form closure, log-uniform t in [1e-5, 1e5]
  rober-regular    ROBER, all three species trained directly
  pollu-stiff      POLLU, threshold 2.5e-4, Newton closure, uniform t in [1e-3, 60]
  pollu-regular    POLLU, all twenty species trained directly

Configuration:
  Settings come from built-in defaults, then --preset, then the INI file
  (--config, or stiff_pinn.ini found in this directory or up to five
  parents), then --section.key=value overrides, e.g.
  --training.max_updates=5000 --solver.rtol=1e-6

Exit codes:
  0 success   2 configuration or input error   3 numerical failure
  4 sweep finished with failed runs
        """


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="INI config file (default: nearest stiff_pinn.ini)")
    common.add_argument("--preset", choices=sorted(EXPERIMENT_PRESETS.keys()),
                        help="Experiment preset applied before the config file")
    common.add_argument("--output-dir", help="Output directory (overrides output.directory)")
    common.add_argument("-v", "--verbose", action="store_true", help="Verbose output")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stiff-pinn",
        description="Stiff chemical kinetics: reference integrators, QSS reduction and PINN training",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _common_options()
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    simulate = sub.add_parser("simulate", parents=[common], help="Integrate the full or reduced system")
    simulate.add_argument("--mechanism", help="builtin:<name> or a mechanism file")
    simulate.add_argument("--method", choices=["bdf", "dopri5"], help="Integrator")
    simulate.add_argument("--system", choices=["full", "reduced"], help="Full or QSS-reduced system")

    reduce = sub.add_parser("reduce", parents=[common], help="Select QSS species and test the closure")
    reduce.add_argument("--mechanism", help="builtin:<name> or a mechanism file")
    reduce.add_argument("--threshold", type=float, help="QSS selection threshold")

    train = sub.add_parser("train", parents=[common], help="Train a PINN (regular or stiff mode)")
    train.add_argument("--mechanism", help="builtin:<name> or a mechanism file")
    train.add_argument("--mode", choices=["regular", "stiff"], help="Train on the full or reduced system")
    train.add_argument("--max-updates", type=int, help="Number of Adam updates")
    train.add_argument("--seed", type=int, help="Experiment seed")

    evaluate = sub.add_parser("evaluate", parents=[common], help="RMSE of a checkpoint against a reference")
    evaluate.add_argument("--checkpoint", help="Checkpoint file, or a trajectory CSV to replay "
                                               "(default: <output-dir>/checkpoint.txt)")
    evaluate.add_argument("--reference", help="Reference trajectory CSV (default: BDF run)")
    evaluate.add_argument("--species", nargs="+", help="Species to score (default: all predicted)")
    evaluate.add_argument("--eval-points", type=int, help="Evaluation grid size (default: output.eval_points)")
    evaluate.add_argument("--reconstruct-qss", action="store_true",
                          help="Score QSS species reconstructed from the closure")

    sweep = sub.add_parser("sweep", parents=[common], help="Train every width x depth cell over several seeds")
    sweep.add_argument("--grid", help="Cells as <width>x<depth>, e.g. 64x4,128x3")
    sweep.add_argument("--seeds", type=int, help="Seeds per cell")
    sweep.add_argument("--jobs", type=int, help="Worker processes")

    stiffness = sub.add_parser("stiffness", parents=[common], help="Jacobian spectrum and step-count comparison")
    stiffness.add_argument("--mechanism", help="builtin:<name> or a mechanism file")
    stiffness.add_argument("--compare-t-end", type=float, default=100.0,
                           help="End of the Dopri5/BDF comparison span (default: 100)")
    stiffness.add_argument("--compare-rtol", type=float, default=1e-6,
                           help="rtol of the comparison runs (default: 1e-6)")

    plot = sub.add_parser("plot", help="Overlay CSV tables as an SVG line plot")
    plot.add_argument("inputs", nargs="+", help="CSV files sharing their first column")
    plot.add_argument("-o", "--output", required=True, help="Output SVG path")
    plot.add_argument("--species", nargs="+", help="Columns to plot (default: all)")
    plot.add_argument("--logx", action="store_true", help="Logarithmic x axis (drops x <= 0)")
    plot.add_argument("--logy", action="store_true", help="Logarithmic y axis")
    plot.add_argument("--title", help="Plot title")
    plot.add_argument("-v", "--verbose", action="store_true", help="Verbose output")
    return parser


# command-line flag -> config key
FLAG_OVERRIDES = {
    "mechanism": "mechanism.source",
    "method": "solver.method",
    "system": "solver.system",
    "threshold": "qssa.threshold",
    "mode": "training.mode",
    "max_updates": "training.max_updates",
    "seed": "training.seed",
    "grid": "sweep.grid",
    "seeds": "sweep.seeds",
    "jobs": "sweep.jobs",
    "output_dir": "output.directory",
}


def collect_overrides(args: argparse.Namespace, extra: Sequence[str]) -> List[str]:
    """``--section.key=value`` leftovers followed by the dedicated flags."""
    overrides = []
    for token in extra:
        body = token[2:] if token.startswith("--") else ""
        if "=" not in body or "." not in body.split("=", 1)[0]:
            raise ConfigError(
                f"Unrecognized argument '{token}'.\n\n"
                f"Config overrides take the form --section.key=value, e.g. --training.max_updates=5000"
            )
        overrides.append(token)
    for flag, key in FLAG_OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"--{key}={value}")
    return overrides


def dispatch(args: argparse.Namespace, overrides: Sequence[str]) -> int:
    if args.command == "plot":
        if overrides:
            raise ConfigError("plot takes no config overrides")
        return cmd_plot(args.inputs, args.output, args.species, args.logx, args.logy, args.title)

    config_path = args.config or find_default_config()
    cfg = load_config(str(config_path) if config_path else None, args.preset, overrides)
    logger.info("Config: %s", config_path or "built-in defaults")
    runner = ExperimentRunner(cfg, verbose=args.verbose)
    if args.command == "simulate":
        return runner.cmd_simulate()
    if args.command == "reduce":
        return runner.cmd_reduce()
    if args.command == "train":
        return runner.cmd_train()
    if args.command == "evaluate":
        return runner.cmd_evaluate(
            checkpoint=args.checkpoint,
            reference=args.reference,
            species=args.species,
            eval_points=args.eval_points,
            reconstruct_qss=args.reconstruct_qss,
        )
    if args.command == "sweep":
        return runner.cmd_sweep()
    if args.command == "stiffness":
        return runner.cmd_stiffness(args.compare_t_end, args.compare_rtol)
    raise ConfigError(f"Unknown command '{args.command}'")


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run the command and return its exit code."""
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="[%(asctime)s] %(message)s",
        datefmt="%H:%M:%S",
    )
    try:
        overrides = collect_overrides(args, extra)
        return dispatch(args, overrides)
    except (ConfigError, MechanismError, PartitionError, DimensionError, FileNotFoundError) as e:
        print(f"\nError: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, DifferentiationError) as e:
        print(f"\nError: {e}", file=sys.stderr)
        snapshot = getattr(e, "snapshot", None)
        if snapshot:
            print(f"State at failure: {snapshot}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        print(f"\nError: {e}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv: Optional[Sequence[str]] = None):
    """Command-line interface."""
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
