# stiff-pinn command-line driver
from .main import build_parser, main, run
from .manifest import RunManifest, validate_output_file, verify_manifest
from .plotting import load_series, plot_csv
from .runner import ExperimentRunner, TrajectoryPredictor, cmd_plot

__all__ = [
    "build_parser",
    "cmd_plot",
    "ExperimentRunner",
    "load_series",
    "main",
    "plot_csv",
    "run",
    "RunManifest",
    "TrajectoryPredictor",
    "validate_output_file",
    "verify_manifest",
]
