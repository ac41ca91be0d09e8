"""Algebraic QSS closure and the reduced differential-algebraic system.

QSS species satisfy ``omega_plus - omega_minus = 0`` given the non-QSS
concentrations. Two closures are available:

- ``closed-form-rober``: the analytic root of the ROBER quadratic for B.
- ``newton``: damped Newton on the QSS rows of the mass-action RHS, iterates
  clamped at zero, tangents by the implicit-function theorem.

Closure inputs always pass through ``abs``; the differential variables
themselves enter the RHS unchanged.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from ..common.errors import ClosureError, DimensionError, PartitionError
from ..mechanism.model import Mechanism
from .partition import QssPartition

logger = logging.getLogger(__name__)

CLOSURE_MODES = ("newton", "closed-form-rober")
MAX_HALVINGS = 30

# (reactants, products) of the three ROBER reactions over (A, B, C)
_ROBER_PATTERN = (
    ({0: 1}, {1: 1}),
    ({1: 2}, {1: 1, 2: 1}),
    ({1: 1, 2: 1}, {0: 1, 2: 1}),
)


def rober_rate_constants(m: Mechanism) -> Optional[Tuple[float, float, float]]:
    """(k1, k2, k3) when ``m`` has the ROBER structure, else None."""
    if m.n_species != 3 or m.n_reactions != 3:
        return None
    for reaction, (reactants, products) in zip(m.reactions, _ROBER_PATTERN):
        if reaction.reactant_stoich != reactants or reaction.product_stoich != products:
            return None
    return tuple(reaction.rate_constant for reaction in m.reactions)


@dataclass(frozen=True)
class ClosureSolveReport:
    iterations: int
    final_residual_norm: float
    converged: bool
    point_converged: Optional[np.ndarray] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class ReducedSystem:
    """Mechanism plus partition; the QSS rows become algebraic constraints.

    ``initial_guess`` seeds Newton when no warm start is supplied (the
    selection threshold divided by ten).
    """

    base: Mechanism
    partition: QssPartition
    closure_mode: str = "newton"
    tolerance: float = 1e-12
    max_iterations: int = 50
    initial_guess: float = 1e-5

    def __post_init__(self):
        if self.closure_mode not in CLOSURE_MODES:
            raise PartitionError(
                f"Unknown closure mode '{self.closure_mode}'. Valid modes: {', '.join(CLOSURE_MODES)}"
            )
        if self.partition.n_species != self.base.n_species:
            raise PartitionError(
                f"Partition covers {self.partition.n_species} species, "
                f"mechanism has {self.base.n_species}"
            )
        if not self.partition.qss_indices:
            raise PartitionError("A reduced system needs at least one QSS species")
        if not self.partition.non_qss_indices:
            raise PartitionError("A reduced system needs at least one non-QSS species")
        if self.closure_mode == "closed-form-rober" and (
            rober_rate_constants(self.base) is None or self.partition.qss_indices != (1,)
        ):
            raise PartitionError(
                "closed-form-rober closure requires the ROBER mechanism with QSS = {B}"
            )

    @property
    def qss(self) -> np.ndarray:
        return np.array(self.partition.qss_indices, dtype=int)

    @property
    def non_qss(self) -> np.ndarray:
        return np.array(self.partition.non_qss_indices, dtype=int)

    @property
    def n_non_qss(self) -> int:
        return len(self.partition.non_qss_indices)

    @property
    def non_qss_names(self) -> Tuple[str, ...]:
        return self.partition.non_qss_names(self.base)

    @property
    def qss_names(self) -> Tuple[str, ...]:
        return self.partition.qss_names(self.base)

    @property
    def y0(self) -> np.ndarray:
        return self.base.y0[self.non_qss]

    def check_dimension(self, y_non_qss: np.ndarray) -> np.ndarray:
        y = np.asarray(y_non_qss, dtype=float)
        if y.ndim == 0 or y.shape[-1] != self.n_non_qss:
            raise DimensionError(
                f"Expected {self.n_non_qss} non-QSS components, got {y.shape[-1] if y.ndim else 0}"
            )
        return y

    def embed(self, y_non_qss: np.ndarray, y_qss: np.ndarray) -> np.ndarray:
        full = np.zeros(y_non_qss.shape[:-1] + (self.base.n_species,))
        full[..., self.non_qss] = y_non_qss
        full[..., self.qss] = y_qss
        return full


def closure_residual_norm(r: ReducedSystem, full: np.ndarray) -> np.ndarray:
    """Per point: max over QSS rows of |omega_plus - omega_minus| / max(1, omega_plus + omega_minus)."""
    omega_plus, omega_minus = r.base.kinetics.split(full)
    g = (omega_plus - omega_minus)[..., r.qss]
    size = np.maximum(1.0, (omega_plus + omega_minus)[..., r.qss])
    return np.max(np.abs(g) / size, axis=-1)


def _rober_closed_form(r: ReducedSystem, y_abs: np.ndarray) -> np.ndarray:
    k1, k2, k3 = rober_rate_constants(r.base)
    y1, y3 = y_abs[..., 0], y_abs[..., 1]
    root = np.sqrt(k3 * k3 * y3 * y3 + 4.0 * k1 * k2 * y1)
    # rationalized root of k2 y2^2 + k3 y3 y2 - k1 y1 = 0, no cancellation at large k3 y3
    denominator = k3 * y3 + root
    with np.errstate(divide="ignore", invalid="ignore"):
        y2 = np.where(denominator > 0, 2.0 * k1 * y1 / denominator, 0.0)
    return y2[..., None]


def _solve_linear(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Batched solve; singular systems get a least-squares step and a False flag."""
    try:
        return np.linalg.solve(a, b[..., None])[..., 0], np.ones(b.shape[:-1], dtype=bool)
    except np.linalg.LinAlgError:
        out = np.empty_like(b)
        ok = np.ones(b.shape[:-1], dtype=bool)
        for idx in np.ndindex(*b.shape[:-1]):
            try:
                out[idx] = np.linalg.solve(a[idx], b[idx])
            except np.linalg.LinAlgError:
                out[idx] = np.linalg.lstsq(a[idx], b[idx], rcond=None)[0]
                ok[idx] = False
        return out, ok


def _newton(
    r: ReducedSystem, y_abs: np.ndarray, guess: Optional[np.ndarray]
) -> Tuple[np.ndarray, int, np.ndarray]:
    kinetics = r.base.kinetics
    qss = r.qss
    n_q = qss.size
    batch = y_abs.shape[:-1]
    if guess is not None and np.shape(guess) == batch + (n_q,):
        guess = np.asarray(guess, dtype=float)
        y_q = np.where(np.isfinite(guess), np.maximum(guess, 0.0), r.initial_guess)
    else:
        y_q = np.full(batch + (n_q,), r.initial_guess)

    norm = closure_residual_norm(r, r.embed(y_abs, y_q))
    iterations = 0
    while iterations < r.max_iterations and np.any(norm > r.tolerance):
        iterations += 1
        active = norm > r.tolerance
        full = r.embed(y_abs, y_q)
        g = kinetics.rhs(full)[..., qss]
        j_qq = kinetics.jacobian(full)[..., qss[:, None], qss]
        step, _ = _solve_linear(j_qq, -g)
        step = np.where(active[..., None], step, 0.0)

        alpha = np.ones(batch)
        trial = np.maximum(y_q + alpha[..., None] * step, 0.0)
        trial_norm = closure_residual_norm(r, r.embed(y_abs, trial))
        for _ in range(MAX_HALVINGS):
            worse = active & (trial_norm > norm)
            if not np.any(worse):
                break
            alpha = np.where(worse, 0.5 * alpha, alpha)
            trial = np.maximum(y_q + alpha[..., None] * step, 0.0)
            trial_norm = closure_residual_norm(r, r.embed(y_abs, trial))
        y_q, norm = trial, trial_norm
    return y_q, iterations, norm


def solve_qss_closure(
    r: ReducedSystem,
    t: float,
    y_non_qss: np.ndarray,
    guess: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, ClosureSolveReport]:
    """QSS concentrations consistent with ``y_non_qss``.

    Accepts one state or a batch with a leading axis. Non-convergence is
    reported, not raised.
    """
    y = r.check_dimension(y_non_qss)
    if not np.all(np.isfinite(y)):
        raise ClosureError("Closure inputs must be finite")
    y_abs = np.abs(y)
    if r.closure_mode == "closed-form-rober":
        y_q = _rober_closed_form(r, y_abs)
        iterations = 0
        norm = closure_residual_norm(r, r.embed(y_abs, y_q))
        point_ok = np.ones(y.shape[:-1], dtype=bool)
    else:
        y_q, iterations, norm = _newton(r, y_abs, guess)
        point_ok = norm <= r.tolerance
    report = ClosureSolveReport(
        iterations=iterations,
        final_residual_norm=float(np.max(norm)) if np.size(norm) else 0.0,
        converged=bool(np.all(point_ok)),
        point_converged=np.atleast_1d(point_ok),
    )
    if not report.converged:
        logger.debug(
            "QSS closure: %d point(s) unconverged after %d iterations (residual %.3g)",
            int(np.size(point_ok) - np.count_nonzero(point_ok)), iterations,
            report.final_residual_norm,
        )
    return y_q, report


def closure_jacobian(r: ReducedSystem, t: float, y_non_qss: np.ndarray, y_qss: np.ndarray) -> np.ndarray:
    """d(y_qss)/d(y_non_qss) at a converged closure point, shape (..., n_qss, n_non_qss).

    Raises:
        ClosureError: If the QSS sub-Jacobian is singular there.
    """
    y = r.check_dimension(y_non_qss)
    sign = np.where(y < 0, -1.0, 1.0)
    y_abs = np.abs(y)
    if r.closure_mode == "closed-form-rober":
        k1, k2, k3 = rober_rate_constants(r.base)
        y1, y3 = y_abs[..., 0], y_abs[..., 1]
        root = np.sqrt(k3 * k3 * y3 * y3 + 4.0 * k1 * k2 * y1)
        if np.any(root == 0):
            raise ClosureError("Closed-form ROBER closure is not differentiable at y1 = y3 = 0")
        d_y1 = k1 / root
        d_y3 = (-k3 + k3 * k3 * y3 / root) / (2.0 * k2)
        return (np.stack([d_y1, d_y3], axis=-1) * sign)[..., None, :]

    full = r.embed(y_abs, np.asarray(y_qss, dtype=float))
    jac = r.base.kinetics.jacobian(full)
    j_qq = jac[..., r.qss[:, None], r.qss]
    j_qn = jac[..., r.qss[:, None], r.non_qss]
    try:
        solved = np.linalg.solve(j_qq, j_qn)
    except np.linalg.LinAlgError:
        raise ClosureError(
            "QSS sub-Jacobian is singular: the QSS assumption is invalid at this state"
        ) from None
    return -solved * sign[..., None, :]


def closure_tangent(
    r: ReducedSystem,
    t: float,
    y_non_qss: np.ndarray,
    direction: np.ndarray,
    y_qss: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Directional derivative of the closure along ``direction``."""
    y = r.check_dimension(y_non_qss)
    d = r.check_dimension(direction)
    if y_qss is None:
        y_qss, report = solve_qss_closure(r, t, y)
        if not report.converged:
            raise ClosureError(
                f"QSS closure did not converge (residual {report.final_residual_norm:.3g})"
            )
    return np.einsum("...qn,...n->...q", closure_jacobian(r, t, y, y_qss), d)


def full_state(
    r: ReducedSystem, t: float, y_non_qss: np.ndarray, guess: Optional[np.ndarray] = None
) -> np.ndarray:
    """Full concentration vector with the QSS slots filled from the closure.

    Raises:
        ClosureError: If the closure does not converge.
    """
    y = r.check_dimension(y_non_qss)
    y_q, report = solve_qss_closure(r, t, y, guess)
    if not report.converged:
        raise ClosureError(
            f"QSS closure did not converge at t={t:g} "
            f"(residual {report.final_residual_norm:.3g} after {report.iterations} iterations)"
        )
    return r.embed(y, y_q)


def closure_onset(r: ReducedSystem, states: np.ndarray) -> int:
    """Index of the first full-state row after which the closure converges on every row.

    Returns ``len(states)`` when the closure fails on the last row.
    """
    states = np.asarray(states, dtype=float)
    if states.ndim != 2 or states.shape[1] != r.base.n_species:
        raise DimensionError(
            f"Expected full states of shape (n, {r.base.n_species}), got {states.shape}"
        )
    _, report = solve_qss_closure(r, 0.0, states[:, r.non_qss])
    bad = np.flatnonzero(~np.asarray(report.point_converged, dtype=bool))
    return int(bad[-1]) + 1 if bad.size else 0


def reduced_rhs(
    r: ReducedSystem, t: float, y_non_qss: np.ndarray, guess: Optional[np.ndarray] = None
) -> np.ndarray:
    """Non-QSS rows of the mass-action RHS evaluated on the closed full state."""
    return r.base.kinetics.rhs(full_state(r, t, y_non_qss, guess))[..., r.non_qss]


def reduced_jacobian(
    r: ReducedSystem, t: float, y_non_qss: np.ndarray, guess: Optional[np.ndarray] = None
) -> np.ndarray:
    """Total derivative of :func:`reduced_rhs`: J_nn + J_nq dq/dn."""
    y = r.check_dimension(y_non_qss)
    full = full_state(r, t, y, guess)
    jac = r.base.kinetics.jacobian(full)
    j_nn = jac[..., r.non_qss[:, None], r.non_qss]
    j_nq = jac[..., r.non_qss[:, None], r.qss]
    return j_nn + j_nq @ closure_jacobian(r, t, y, full[..., r.qss])


class ReducedRhs:
    """Callable reduced RHS with a private Newton warm start.

    Each integration gets its own instance so no cache is shared between
    concurrent streams.
    """

    def __init__(self, r: ReducedSystem):
        self.system = r
        self._last: Optional[np.ndarray] = None

    def __call__(self, t: float, y_non_qss: np.ndarray) -> np.ndarray:
        full = full_state(self.system, t, y_non_qss, self._last)
        self._last = full[..., self.system.qss]
        return self.system.base.kinetics.rhs(full)[..., self.system.non_qss]

    def jacobian(self, t: float, y_non_qss: np.ndarray) -> np.ndarray:
        return reduced_jacobian(self.system, t, y_non_qss, self._last)

    def full_states(self, times: np.ndarray, states: np.ndarray) -> np.ndarray:
        """Closed full states along an output grid, each row warm-started from the one before."""
        r = self.system
        out = np.empty((len(times), r.base.n_species))
        guess = None
        for row, (t, y) in enumerate(zip(times, states)):
            out[row] = full_state(r, float(t), y, guess)
            guess = out[row, r.qss]
        return out
