"""Accuracy of trained models against reference trajectories."""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from ..common.errors import DimensionError
from ..integrators.trajectory import SolutionTrajectory
from ..qssa.closure import ReducedSystem, solve_qss_closure

logger = logging.getLogger(__name__)

DEFAULT_EVAL_POINTS = 1000


def eval_grid(t_min: float, t_max: float, n: int = DEFAULT_EVAL_POINTS, log: bool = True) -> np.ndarray:
    if log:
        return np.clip(np.logspace(np.log10(t_min), np.log10(t_max), n), t_min, t_max)
    return np.linspace(t_min, t_max, n)


def _columns(names: Sequence[str], wanted: Sequence[str], owner: str) -> np.ndarray:
    missing = [name for name in wanted if name not in names]
    if missing:
        raise DimensionError(f"{owner} has no species {', '.join(missing)} (has {', '.join(names)})")
    return np.array([list(names).index(name) for name in wanted], dtype=int)


def evaluate_rmse(
    model,
    reference: SolutionTrajectory,
    species: Optional[Sequence[str]] = None,
    eval_times: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Per-species RMSE of ``model(t)`` against the interpolated reference.

    ``model`` is any callable mapping a time array to a (times, species)
    matrix with a ``species`` attribute naming its columns; ``species``
    defaults to all of them. The default grid is 1000 log-uniform points
    over the positive part of the reference span.
    """
    species = tuple(species or model.species)
    if eval_times is None:
        t0, t1 = reference.t_span
        positive = reference.times[reference.times > 0]
        eval_times = eval_grid(max(t0, positive[0] if positive.size else 1e-5), t1)
    times = np.asarray(eval_times, dtype=float)
    model_cols = _columns(model.species, species, "model")
    ref_cols = _columns(reference.species_names, species, "reference")
    predicted = np.asarray(model(times), dtype=float).reshape(times.size, -1)[:, model_cols]
    expected = reference.sample(times)[:, ref_cols]
    return np.sqrt(np.mean((predicted - expected) ** 2, axis=0))


def reconstruct_qss_profile(
    model, r: ReducedSystem, eval_times: Sequence[float]
) -> Tuple[np.ndarray, np.ndarray]:
    """QSS concentrations from the closure at the model's non-QSS predictions.

    Returns ``(profile, missing)``; rows where the closure fails are NaN and
    flagged in ``missing``.
    """
    times = np.asarray(eval_times, dtype=float)
    cols = _columns(model.species, r.non_qss_names, "model")
    y_non_qss = np.asarray(model(times), dtype=float).reshape(times.size, -1)[:, cols]
    profile = np.full((times.size, r.qss.size), np.nan)
    missing = np.ones(times.size, dtype=bool)
    finite = np.all(np.isfinite(y_non_qss), axis=1)
    if np.any(finite):
        y_q, report = solve_qss_closure(r, 0.0, y_non_qss[finite])
        rows = np.flatnonzero(finite)[report.point_converged]
        profile[rows] = y_q[report.point_converged]
        missing[rows] = False
    if np.any(missing):
        logger.warning("QSS closure failed at %d of %d evaluation times", int(missing.sum()), times.size)
    return profile, missing


def predict_full_state(model, r: ReducedSystem, eval_times: Sequence[float]) -> np.ndarray:
    """All species: model output for non-QSS columns, closure for QSS columns."""
    times = np.asarray(eval_times, dtype=float)
    cols = _columns(model.species, r.non_qss_names, "model")
    y_non_qss = np.asarray(model(times), dtype=float).reshape(times.size, -1)[:, cols]
    profile, _ = reconstruct_qss_profile(model, r, times)
    return r.embed(y_non_qss, profile)
