"""Step-loop driver shared by the explicit and implicit integrators."""

import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ..common.errors import DimensionError, IntegrationError, StepLimitExceeded
from .trajectory import SolutionTrajectory, SolverConfig, StepStats

logger = logging.getLogger(__name__)

Rhs = Callable[[float, np.ndarray], np.ndarray]
Jacobian = Callable[[float, np.ndarray], np.ndarray]


def rms_norm(x: np.ndarray) -> float:
    return float(np.linalg.norm(x) / np.sqrt(x.size)) if x.size else 0.0


def select_initial_step(
    fun: Rhs, t0: float, y0: np.ndarray, f0: np.ndarray, order: int,
    rtol: float, atol: np.ndarray, t_bound: float,
) -> float:
    """Automatic first step from the scaled sizes of y0, f(y0) and a trial Euler step."""
    interval = abs(t_bound - t0)
    if y0.size == 0 or interval == 0:
        return interval
    scale = atol + np.abs(y0) * rtol
    d0 = rms_norm(y0 / scale)
    d1 = rms_norm(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, interval)
    f1 = fun(t0 + h0, y0 + h0 * f0)
    d2 = rms_norm((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / (order + 1))
    return min(100 * h0, h1, interval)


class OdeSolver:
    """Common state for a single integration call.

    Subclasses implement :meth:`_step_impl` (advance ``t``/``y`` by one
    accepted step) and :meth:`interpolant` (dense output over the last step).
    """

    name = "base"

    def __init__(self, fun: Rhs, y0: Sequence[float], t_span: Tuple[float, float], cfg: SolverConfig):
        self.cfg = cfg
        self.stats = StepStats()
        self.t = float(t_span[0])
        self.t_old = self.t
        self.t_bound = float(t_span[1])
        if not self.t_bound > self.t:
            raise ValueError(f"t_span must be increasing (got {t_span})")
        self.y = np.array(y0, dtype=float)
        self.n = self.y.size
        self.rtol = cfg.rtol
        self.atol = cfg.atol_array(self.n)
        self._fun = fun

    def fun(self, t: float, y: np.ndarray) -> np.ndarray:
        self.stats.rhs_evaluations += 1
        f = np.asarray(self._fun(t, y), dtype=float)
        if f.shape != y.shape:
            raise DimensionError(f"RHS returned shape {f.shape}, expected {y.shape}")
        return f

    def min_step(self, t: float) -> float:
        return 10 * abs(np.nextafter(t, np.inf) - t)

    def step(self) -> None:
        if self.stats.accepted_steps >= self.cfg.max_steps:
            raise StepLimitExceeded(
                f"{self.name}: max_steps={self.cfg.max_steps} reached at t={self.t:.6g} "
                f"before t_end={self.t_bound:.6g} (the problem may be stiff)"
            )
        self.t_old = self.t
        self._step_impl()
        if not np.all(np.isfinite(self.y)):
            raise IntegrationError(f"{self.name}: non-finite state at t={self.t:.6g}")
        self.stats.accepted_steps += 1

    def _step_impl(self) -> None:
        raise NotImplementedError

    def interpolant(self) -> Callable[[float], np.ndarray]:
        raise NotImplementedError


def run_solver(
    solver: OdeSolver,
    output_times: Optional[Sequence[float]] = None,
    dense_output: bool = False,
) -> SolutionTrajectory:
    """Drive ``solver`` to the end of its span, sampling ``output_times``.

    Without ``output_times`` every accepted step point is reported.
    """
    t0, t1 = solver.t, solver.t_bound
    if output_times is not None:
        grid = np.asarray(output_times, dtype=float)
        if grid.size and (grid[0] < t0 or grid[-1] > t1):
            raise ValueError(f"output_times must lie within [{t0}, {t1}]")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise ValueError("output_times must be strictly increasing")
    else:
        grid = None

    times, states = [], []
    ends, segments = [], []
    cursor = 0
    if grid is None:
        times.append(t0)
        states.append(solver.y.copy())
    else:
        while cursor < grid.size and grid[cursor] <= t0:
            times.append(grid[cursor])
            states.append(solver.y.copy())
            cursor += 1

    while solver.t < t1:
        solver.step()
        if grid is None:
            times.append(solver.t)
            states.append(solver.y.copy())
        elif cursor < grid.size and grid[cursor] <= solver.t:
            interpolate = solver.interpolant()
            while cursor < grid.size and grid[cursor] <= solver.t:
                t_out = grid[cursor]
                states.append(solver.y.copy() if t_out == solver.t else interpolate(t_out))
                times.append(t_out)
                cursor += 1
        if dense_output:
            ends.append(solver.t)
            segments.append(solver.interpolant())

    logger.debug(
        "%s finished: %d accepted, %d rejected, %d rhs, %d jac",
        solver.name, solver.stats.accepted_steps, solver.stats.rejected_steps,
        solver.stats.rhs_evaluations, solver.stats.jacobian_evaluations,
    )
    return SolutionTrajectory(
        times=np.array(times),
        states=np.array(states).reshape(len(times), solver.n),
        stats=solver.stats,
        segment_ends=np.array(ends) if dense_output else None,
        segments=segments if dense_output else None,
    )
