"""Variable-order (1-5), variable-step backward differentiation formulas.

The history is kept as modified divided differences ``D`` so a change of
step size is a small matrix product and the predictor is ``sum(D[:k+1])``.
The corrector is a modified Newton iteration on ``(I - c J) dy = ...``
reusing one LU factorization until the step or order changes. The
Jacobian is re-evaluated at the start of the first step after such a
change, and again whenever Newton stops converging.
"""

from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from ..common.errors import IntegrationError
from .base import Jacobian, OdeSolver, Rhs, rms_norm, run_solver, select_initial_step
from .trajectory import SolutionTrajectory, SolverConfig

MAX_ORDER = 5
NEWTON_MAXITER = 4
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
EPS = np.finfo(float).eps


def _compute_r(order: int, factor: float) -> np.ndarray:
    i = np.arange(1, order + 1)[:, None]
    j = np.arange(1, order + 1)
    m = np.zeros((order + 1, order + 1))
    m[1:, 1:] = (i - 1 - factor * j) / i
    m[0] = 1
    return np.cumprod(m, axis=0)


def change_d(D: np.ndarray, order: int, factor: float) -> None:
    """Rescale the difference array in place for a step-size ratio ``factor``."""
    ru = _compute_r(order, factor) @ _compute_r(order, 1.0)
    D[: order + 1] = ru.T @ D[: order + 1]


class BdfSolver(OdeSolver):
    name = "bdf"

    def __init__(
        self, fun: Rhs, jac: Jacobian, y0: Sequence[float], t_span: Tuple[float, float],
        cfg: SolverConfig,
    ):
        super().__init__(fun, y0, t_span, cfg)
        self._jac = jac
        f = self.fun(self.t, self.y)
        if cfg.initial_step > 0:
            self.h_abs = min(cfg.initial_step, self.t_bound - self.t)
        else:
            self.h_abs = select_initial_step(
                self.fun, self.t, self.y, f, 1, self.rtol, self.atol, self.t_bound
            )
        self.h_abs = min(self.h_abs, cfg.max_step)
        self.newton_tol = max(10 * EPS / self.rtol, min(0.03, self.rtol ** 0.5))
        self.gamma = np.hstack((0.0, np.cumsum(1.0 / np.arange(1, MAX_ORDER + 1))))
        self.alpha = self.gamma
        self.error_const = 1.0 / np.arange(1, MAX_ORDER + 2)
        self.J = self.jac(self.t, self.y)
        self.jac_current = True
        self.I = np.identity(self.n)
        self.LU = None
        self.D = np.zeros((MAX_ORDER + 3, self.n))
        self.D[0] = self.y
        self.D[1] = f * self.h_abs
        self.order = 1
        self.n_equal_steps = 0

    def jac(self, t: float, y: np.ndarray) -> np.ndarray:
        self.stats.jacobian_evaluations += 1
        return np.asarray(self._jac(t, y), dtype=float).reshape(self.n, self.n)

    def _newton(self, t_new, y_predict, c, psi, LU, scale):
        d = np.zeros(self.n)
        y = y_predict.copy()
        dy_norm_old = None
        converged = False
        k = 0
        for k in range(NEWTON_MAXITER):
            f = self.fun(t_new, y)
            if not np.all(np.isfinite(f)):
                break
            dy = lu_solve(LU, c * f - psi - d)
            dy_norm = rms_norm(dy / scale)
            rate = None if dy_norm_old is None else dy_norm / dy_norm_old
            if rate is not None and (
                rate >= 1 or rate ** (NEWTON_MAXITER - k) / (1 - rate) * dy_norm > self.newton_tol
            ):
                break
            y += dy
            d += dy
            if dy_norm == 0 or (rate is not None and rate / (1 - rate) * dy_norm < self.newton_tol):
                converged = True
                break
            dy_norm_old = dy_norm
        self.stats.newton_iterations += k + 1
        return converged, k + 1, y, d

    def _step_impl(self) -> None:
        t, D = self.t, self.D
        max_step = self.cfg.max_step
        min_step = self.min_step(t)
        if self.h_abs > max_step:
            change_d(D, self.order, max_step / self.h_abs)
            self.h_abs = max_step
            self.n_equal_steps = 0
        elif self.h_abs < min_step:
            change_d(D, self.order, min_step / self.h_abs)
            self.h_abs = min_step
            self.n_equal_steps = 0
        h_abs = self.h_abs

        order = self.order
        J, LU = self.J, self.LU
        current_jac = self.jac_current
        if LU is None and not current_jac:
            J = self.jac(t, self.y)
            current_jac = True

        while True:
            if h_abs < min_step:
                raise IntegrationError(
                    f"bdf: step size underflow at t={t:.6g} (Newton failed to converge)"
                )
            t_new = t + h_abs
            if t_new > self.t_bound:
                t_new = self.t_bound
                change_d(D, order, (t_new - t) / h_abs)
                self.n_equal_steps = 0
                LU = None
            h = t_new - t
            h_abs = h

            y_predict = np.sum(D[: order + 1], axis=0)
            scale = self.atol + self.rtol * np.abs(y_predict)
            psi = D[1: order + 1].T @ self.gamma[1: order + 1] / self.alpha[order]
            c = h / self.alpha[order]

            converged = False
            while not converged:
                if LU is None:
                    LU = lu_factor(self.I - c * J)
                converged, n_iter, y_new, d = self._newton(t_new, y_predict, c, psi, LU, scale)
                if not converged:
                    if current_jac:
                        break
                    J = self.jac(t_new, y_predict)
                    LU = None
                    current_jac = True

            if not converged:
                h_abs *= 0.5
                change_d(D, order, 0.5)
                self.n_equal_steps = 0
                LU = None
                self.stats.rejected_steps += 1
                continue

            safety = 0.9 * (2 * NEWTON_MAXITER + 1) / (2 * NEWTON_MAXITER + n_iter)
            scale = self.atol + self.rtol * np.abs(y_new)
            error_norm = rms_norm(self.error_const[order] * d / scale)
            if error_norm > 1:
                factor = max(MIN_FACTOR, safety * error_norm ** (-1 / (order + 1)))
                h_abs *= factor
                change_d(D, order, factor)
                self.n_equal_steps = 0
                self.stats.rejected_steps += 1
                continue
            break

        self.n_equal_steps += 1
        self.t, self.y = t_new, y_new
        self.h_abs, self.J, self.LU = h_abs, J, LU
        self.jac_current = False

        D[order + 2] = d - D[order + 1]
        D[order + 1] = d
        for i in reversed(range(order + 1)):
            D[i] += D[i + 1]

        if self.n_equal_steps < order + 1:
            return

        # order selection from the error estimates at k-1, k and k+1
        error_m_norm = (
            rms_norm(self.error_const[order - 1] * D[order] / scale) if order > 1 else np.inf
        )
        error_p_norm = (
            rms_norm(self.error_const[order + 1] * D[order + 2] / scale)
            if order < MAX_ORDER else np.inf
        )
        error_norms = np.array([error_m_norm, error_norm, error_p_norm])
        with np.errstate(divide="ignore"):
            factors = error_norms ** (-1.0 / np.arange(order, order + 3))
        self.order = order + int(np.argmax(factors)) - 1
        factor = min(MAX_FACTOR, safety * np.max(factors))
        self.h_abs *= factor
        change_d(D, self.order, factor)
        self.n_equal_steps = 0
        self.LU = None

    def interpolant(self):
        order, h = self.order, self.h_abs
        t_shift = self.t - h * np.arange(order)
        denom = h * (1 + np.arange(order))
        D = self.D[: order + 1].copy()

        def evaluate(t: float) -> np.ndarray:
            p = np.cumprod((t - t_shift) / denom)
            return D[0] + D[1:].T @ p

        return evaluate


def integrate_bdf(
    rhs: Rhs,
    jacobian: Jacobian,
    y0: Sequence[float],
    t_span: Tuple[float, float],
    cfg: Optional[SolverConfig] = None,
    output_times: Optional[Sequence[float]] = None,
    dense_output: bool = False,
) -> SolutionTrajectory:
    """Integrate a stiff system with variable-order BDF and an analytic Jacobian.

    Raises:
        StepLimitExceeded: After ``cfg.max_steps`` accepted steps.
        IntegrationError: When Newton keeps failing until the step underflows.
    """
    cfg = cfg or SolverConfig()
    solver = BdfSolver(rhs, jacobian, y0, t_span, cfg)
    return run_solver(solver, output_times, dense_output)
