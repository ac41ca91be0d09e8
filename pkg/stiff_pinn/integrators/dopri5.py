"""Dormand–Prince 5(4) explicit Runge–Kutta pair with PI step control."""

from typing import Optional, Sequence, Tuple

import numpy as np

from ..common.errors import IntegrationError
from .base import OdeSolver, Rhs, run_solver, select_initial_step
from .trajectory import SolutionTrajectory, SolverConfig

C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
A = np.array([
    [0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
])
B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# fifth-order minus embedded fourth-order weights, last entry for the FSAL stage
E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# continuous extension: y(t + th) = y + h * K^T P [th, th^2, th^3, th^4]
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
BETA = 0.04
ALPHA = 0.2 - 0.75 * BETA


class Dopri5Solver(OdeSolver):
    name = "dopri5"

    def __init__(self, fun: Rhs, y0: Sequence[float], t_span: Tuple[float, float], cfg: SolverConfig):
        super().__init__(fun, y0, t_span, cfg)
        self.f = self.fun(self.t, self.y)
        if cfg.initial_step > 0:
            self.h = min(cfg.initial_step, self.t_bound - self.t)
        else:
            self.h = select_initial_step(
                self.fun, self.t, self.y, self.f, 4, self.rtol, self.atol, self.t_bound
            )
        self.h = min(self.h, cfg.max_step)
        self.err_old = 1e-4
        self.K = np.empty((7, self.n))
        self.h_last = 0.0
        self.y_old = self.y.copy()

    def _stages(self, t: float, y: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
        K = self.K
        K[0] = self.f
        for s in range(1, 6):
            dy = h * (K[:s].T @ A[s, :s])
            K[s] = self.fun(t + C[s] * h, y + dy)
        y_new = y + h * (K[:6].T @ B)
        K[6] = self.fun(t + h, y_new)
        return y_new, K[6]

    def _step_impl(self) -> None:
        t, y = self.t, self.y
        h = min(self.h, self.cfg.max_step)
        rejected = False
        while True:
            if h < self.min_step(t):
                raise IntegrationError(f"dopri5: step size underflow at t={t:.6g}")
            t_new = t + h
            if t_new > self.t_bound:
                t_new = self.t_bound
            h = t_new - t
            y_new, f_new = self._stages(t, y, h)
            scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.sqrt(np.mean((h * (self.K.T @ E) / scale) ** 2)))
            if np.isfinite(err) and err <= 1.0:
                break
            factor = MIN_FACTOR if not np.isfinite(err) else max(MIN_FACTOR, SAFETY * err ** -0.2)
            h *= factor
            rejected = True
            self.stats.rejected_steps += 1

        if err == 0.0:
            factor = MAX_FACTOR
        else:
            factor = min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err ** -ALPHA * self.err_old ** BETA))
        if rejected:
            factor = min(1.0, factor)
        self.err_old = max(err, 1e-4)
        self.y_old = y
        self.h_last = h
        self.t, self.y, self.f = t_new, y_new, f_new
        self.h = h * factor

    def interpolant(self):
        t_old, h, y_old = self.t_old, self.h_last, self.y_old
        Q = self.K.T @ P

        def evaluate(t: float) -> np.ndarray:
            theta = (t - t_old) / h
            return y_old + h * (Q @ (theta ** np.arange(1, 5)))

        return evaluate


def integrate_dopri5(
    rhs: Rhs,
    y0: Sequence[float],
    t_span: Tuple[float, float],
    cfg: Optional[SolverConfig] = None,
    output_times: Optional[Sequence[float]] = None,
    dense_output: bool = False,
) -> SolutionTrajectory:
    """Integrate ``y' = rhs(t, y)`` with Dormand–Prince 5(4).

    Raises:
        StepLimitExceeded: After ``cfg.max_steps`` accepted steps (a stiffness signal).
        IntegrationError: On step-size underflow or a non-finite state.
    """
    cfg = cfg or SolverConfig(method="dopri5")
    solver = Dopri5Solver(rhs, y0, t_span, cfg)
    return run_solver(solver, output_times, dense_output)
