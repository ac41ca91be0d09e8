"""Exception hierarchy shared by every stiff-pinn subpackage."""

from typing import Optional


class StiffPinnError(Exception):
    """Base class for all errors raised by stiff-pinn."""


class MechanismError(StiffPinnError, ValueError):
    """Invalid mechanism content (unknown species, bad rate constant, ...)."""


class MechanismSyntaxError(MechanismError):
    """Mechanism file that does not follow the line grammar."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class DimensionError(StiffPinnError, ValueError):
    """State or direction vector whose length does not match the system."""


class ConfigError(StiffPinnError, ValueError):
    """Experiment configuration that cannot be parsed or validated."""


class PartitionError(StiffPinnError, ValueError):
    """Degenerate or inconsistent QSS partition."""


class NumericalError(StiffPinnError, RuntimeError):
    """A numerical procedure failed to produce a usable result."""


class IntegrationError(NumericalError):
    """ODE integration failure (step underflow, Newton breakdown)."""


class StepLimitExceeded(IntegrationError):
    """The integrator hit ``max_steps`` before reaching the end of the span."""


class ClosureError(NumericalError):
    """QSS closure could not be solved or differentiated at a state."""


class EigenSolverError(NumericalError):
    """Shifted QR iteration did not converge."""


class TrainingDivergedError(NumericalError):
    """Non-finite loss during training; ``snapshot`` holds diagnostics."""

    def __init__(self, message: str, snapshot: Optional[dict] = None):
        self.snapshot = snapshot or {}
        super().__init__(message)


class DifferentiationError(StiffPinnError, ArithmeticError):
    """Domain violation inside dual arithmetic or on the tape."""


class UndefinedStiffnessError(NumericalError):
    """Stiffness ratio requested for a spectrum that is numerically all zero."""
