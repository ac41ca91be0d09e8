"""Solver configuration, step statistics and solution trajectories."""

from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import PchipInterpolator

from ..common.errors import ConfigError, DimensionError
from ..common.io_utils import read_table, write_table

METHODS = ("bdf", "dopri5")


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and limits for one integration.

    ``initial_step <= 0`` selects the automatic h0 estimate.
    """

    rtol: float = 1e-8
    atol: Union[float, Tuple[float, ...]] = 1e-12
    initial_step: float = 0.0
    max_steps: int = 500_000
    method: str = "bdf"
    max_step: float = np.inf

    def __post_init__(self):
        if isinstance(self.atol, (list, tuple, np.ndarray)):
            object.__setattr__(self, "atol", tuple(float(a) for a in self.atol))
            if any(a <= 0 for a in self.atol):
                raise ConfigError("atol entries must be positive")
        elif self.atol <= 0:
            raise ConfigError(f"atol must be positive (got {self.atol})")
        if self.rtol <= 0:
            raise ConfigError(f"rtol must be positive (got {self.rtol})")
        if self.max_steps <= 0:
            raise ConfigError(f"max_steps must be positive (got {self.max_steps})")
        if self.method not in METHODS:
            raise ConfigError(f"Unknown method '{self.method}'. Valid methods: {', '.join(METHODS)}")

    def atol_array(self, n: int) -> np.ndarray:
        atol = np.asarray(self.atol, dtype=float)
        if atol.ndim and atol.size != n:
            raise DimensionError(f"atol has {atol.size} entries for {n} components")
        return np.broadcast_to(atol, (n,)).copy()


@dataclass
class StepStats:
    accepted_steps: int = 0
    rejected_steps: int = 0
    rhs_evaluations: int = 0
    jacobian_evaluations: int = 0
    newton_iterations: int = 0

    def as_lines(self) -> List[str]:
        return [f"{key}={value}" for key, value in asdict(self).items()]

    @classmethod
    def from_lines(cls, lines: Sequence[str]) -> "StepStats":
        stats = cls()
        for line in lines:
            key, sep, value = line.partition("=")
            if sep and hasattr(stats, key.strip()):
                setattr(stats, key.strip(), int(value))
        return stats


Interpolant = Callable[[float], np.ndarray]


@dataclass
class SolutionTrajectory:
    """Output grid, state matrix and solver statistics.

    When produced with dense output, ``segments`` holds one interpolant per
    accepted step and :meth:`sample` evaluates them; otherwise it falls back
    to monotone piecewise-cubic interpolation of the stored grid.
    """

    times: np.ndarray
    states: np.ndarray
    stats: StepStats = field(default_factory=StepStats)
    species_names: Tuple[str, ...] = ()
    segment_ends: Optional[np.ndarray] = None
    segments: Optional[List[Interpolant]] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float).reshape(self.times.size, -1)
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("Trajectory times must be strictly increasing")

    @property
    def n_species(self) -> int:
        return self.states.shape[1]

    @property
    def t_span(self) -> Tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def column(self, name: str) -> np.ndarray:
        return self.states[:, self.species_names.index(name)]

    def sample(self, times: Sequence[float]) -> np.ndarray:
        """States at arbitrary ``times`` inside the trajectory span."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        t0, t1 = self.t_span
        span = max(abs(t0), abs(t1), 1.0)
        if np.any(times < t0 - 1e-12 * span) or np.any(times > t1 + 1e-12 * span):
            raise ValueError(f"Sample times outside trajectory span [{t0}, {t1}]")
        if self.segments:
            out = np.empty((times.size, self.n_species))
            slots = np.searchsorted(self.segment_ends, times, side="left")
            slots = np.clip(slots, 0, len(self.segments) - 1)
            for row, (t, slot) in enumerate(zip(times, slots)):
                out[row] = self.segments[slot](t)
            return out
        if self.times.size == 1:
            return np.repeat(self.states, times.size, axis=0)
        return PchipInterpolator(self.times, self.states, axis=0)(times)

    def write_csv(self, file_path: str) -> None:
        names = self.species_names or tuple(f"y{i + 1}" for i in range(self.n_species))
        rows = np.column_stack([self.times, self.states]) if self.times.size else np.empty((0, 1 + len(names)))
        write_table(file_path, ("t", *names), rows, trailer=self.stats.as_lines())

    @classmethod
    def read_csv(cls, file_path: str) -> "SolutionTrajectory":
        columns, rows, trailer = read_table(file_path)
        if not columns or columns[0] != "t":
            raise ValueError(f"Trajectory CSV must start with a 't' column: {file_path}")
        return cls(
            times=rows[:, 0],
            states=rows[:, 1:],
            stats=StepStats.from_lines(trailer),
            species_names=tuple(columns[1:]),
        )
