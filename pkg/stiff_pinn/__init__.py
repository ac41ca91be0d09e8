"""Physics-informed neural networks for stiff chemical kinetics."""

__version__ = "0.1.0"
