"""Adam on a flat parameter vector."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..common.errors import TrainingDivergedError

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n_params: int) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params))


def adam_step(
    parameters: np.ndarray,
    gradient: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = BETA1,
    beta2: float = BETA2,
    epsilon: float = EPSILON,
) -> Tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; inputs are not modified.

    Raises:
        TrainingDivergedError: If the gradient has non-finite entries
            (nothing is updated).
    """
    gradient = np.asarray(gradient, dtype=float)
    if gradient.shape != parameters.shape:
        raise ValueError(f"gradient shape {gradient.shape} != parameter shape {parameters.shape}")
    if not np.all(np.isfinite(gradient)):
        raise TrainingDivergedError(
            "Non-finite gradient; update skipped",
            {"step": state.step, "non_finite_entries": int(np.count_nonzero(~np.isfinite(gradient)))},
        )
    step = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * gradient
    v = beta2 * state.v + (1.0 - beta2) * gradient * gradient
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    updated = parameters - lr * m_hat / (np.sqrt(v_hat) + epsilon)
    return updated, AdamState(m, v, step)
