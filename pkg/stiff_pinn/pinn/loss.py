"""Collocation residual loss for the full and the QSS-reduced systems."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..autodiff.tape import Node, Tape
from ..common.errors import ClosureError, DimensionError
from ..mechanism.model import Mechanism
from ..qssa.closure import ReducedSystem, closure_jacobian, solve_qss_closure
from .model import MlpModel, record_network, record_params, record_prediction

logger = logging.getLogger(__name__)

System = Union[Mechanism, ReducedSystem]


@dataclass
class LossTerms:
    """Numeric side products of one loss evaluation."""

    total: float
    per_species: np.ndarray
    excluded_points: int
    y_qss: Optional[np.ndarray] = None


def trained_species(system: System) -> Tuple[str, ...]:
    if isinstance(system, ReducedSystem):
        return system.non_qss_names
    return system.species_names


def trained_y0(system: System) -> np.ndarray:
    return system.y0


def _closure_rows(
    r: ReducedSystem, y: np.ndarray, guess: Optional[np.ndarray]
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closure values, Jacobians and a usable-row mask for a batch."""
    y_q, report = solve_qss_closure(r, 0.0, y, guess)
    ok = np.array(report.point_converged, dtype=bool) & np.all(np.isfinite(y_q), axis=-1)
    y_q = np.where(ok[:, None], y_q, 0.0)
    jac = np.zeros(y.shape[:-1] + (r.qss.size, r.n_non_qss))
    if np.any(ok):
        try:
            jac[ok] = closure_jacobian(r, 0.0, y[ok], y_q[ok])
        except ClosureError:
            for row in np.flatnonzero(ok):
                try:
                    jac[row] = closure_jacobian(r, 0.0, y[row], y_q[row])
                except ClosureError:
                    ok[row] = False
    return y_q, jac, ok


def record_rhs(
    tape: Tape, system: System, y: Node, guess: Optional[np.ndarray] = None
) -> Tuple[Node, np.ndarray, Optional[np.ndarray]]:
    """Kinetic source term of the trained species, evaluated on the primal of ``y``.

    Returns the node, the mask of usable rows and the QSS values (reduced only).
    """
    y_primal = tape.primal(y)
    if isinstance(system, Mechanism):
        kinetics = system.kinetics
        f = tape.custom("kinetics", y_primal, kinetics.rhs(y_primal.value), kinetics.jacobian(y_primal.value))
        return f, np.ones(y.shape[0], dtype=bool), None

    r = system
    y_q, jac, ok = _closure_rows(r, y_primal.value, guess)
    q = tape.custom("qss_closure", y_primal, y_q, jac)
    full = tape.scatter([(y_primal, r.non_qss), (q, r.qss)], r.base.n_species)
    kinetics = r.base.kinetics
    f_full = tape.custom("kinetics", full, kinetics.rhs(full.value), kinetics.jacobian(full.value))
    return tape.take(f_full, r.non_qss), ok, y_q


def residual_loss(
    tape: Tape,
    model: MlpModel,
    system: System,
    t_batch: Sequence[float],
    species_weights: Sequence[float],
    ic_weights: Optional[Sequence[float]] = None,
    guess: Optional[np.ndarray] = None,
) -> Tuple[Node, LossTerms]:
    """Record ``mean_j sum_i w_i (dy_i/dt - f_i(y))^2`` on ``tape``.

    For a reduced system only the non-QSS species are trained and the QSS
    values come from the closure; batch points where the closure fails are
    excluded and counted. Without the hard-IC transform an initial-condition
    term ``sum_i w_ic_i (y_i(0) - y0_i)^2`` is added.
    """
    t = np.asarray(t_batch, dtype=float).ravel()
    if t.size == 0:
        raise ValueError("residual_loss needs a non-empty batch")
    if np.any(t <= 0):
        raise ValueError("Collocation times must be positive")
    weights = np.asarray(species_weights, dtype=float)
    n_out = len(trained_species(system))
    if model.n_outputs != n_out or weights.shape != (n_out,):
        raise DimensionError(
            f"Model has {model.n_outputs} outputs and {weights.size} weights; "
            f"the system trains {n_out} species"
        )

    params = record_params(tape, model)
    y = record_prediction(tape, model, params, t)
    f, ok, y_q = record_rhs(tape, system, y, guess)
    residual = tape.sub(tape.tangent_of(y), f)
    loss = tape.weighted_mean(tape.square(residual), weights, ok)

    valid = max(int(ok.sum()), 1)
    contributions = weights * np.sum(residual.value[ok] ** 2, axis=0) / valid

    if model.transform == "none":
        w_ic = np.ones(n_out) if ic_weights is None else np.asarray(ic_weights, dtype=float)
        y_init = record_network(tape, params, tape.constant(np.zeros((1, 1))))
        error = tape.sub(y_init, tape.constant(trained_y0(system)[None, :]))
        loss = tape.add(loss, tape.weighted_mean(tape.square(error), w_ic))
        contributions = contributions + w_ic * error.value[0] ** 2

    excluded = int(ok.size - ok.sum())
    if excluded:
        logger.debug("residual_loss: %d of %d points excluded (closure failure)", excluded, ok.size)
    per_species = contributions / weights
    if y_q is not None:
        y_q = np.where(ok[:, None], y_q, np.nan)
    return loss, LossTerms(float(loss.value), per_species, excluded, y_q)
