"""Jacobian eigenvalues and the stiffness ratio.

Dense complex arithmetic throughout: Householder reduction to upper
Hessenberg form, then Wilkinson-shifted QR sweeps with Givens rotations
on the active (undeflated) window.
"""

import logging
from typing import Sequence, Tuple

import numpy as np

from ..common.errors import DimensionError, EigenSolverError, UndefinedStiffnessError
from ..mechanism.model import StateVector
from .base import Jacobian

logger = logging.getLogger(__name__)

MAX_DENSE_SIZE = 32
DEFLATION_TOL = 1e-12
ZERO_EIGENVALUE_TOL = 1e-12
RATIO_FLOOR = 1e-300


def hessenberg(a: np.ndarray) -> np.ndarray:
    """Unitarily similar upper Hessenberg matrix (complex)."""
    h = np.array(a, dtype=complex)
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k]
        if np.linalg.norm(x[1:]) == 0.0:
            continue
        alpha = np.linalg.norm(x)
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x.copy()
        v[0] += phase * alpha
        v /= np.linalg.norm(v)
        h[k + 1:, :] -= 2.0 * np.outer(v, v.conj() @ h[k + 1:, :])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v.conj())
        h[k + 2:, k] = 0.0
    return h


def _eig2(a: complex, b: complex, c: complex, d: complex) -> Tuple[complex, complex]:
    # roots of u^2 - 2pu - bc with u = lambda - d; the larger root first avoids cancellation
    p = 0.5 * (a - d)
    disc = np.sqrt(p * p + b * c)
    if (p.conjugate() * disc).real < 0:
        disc = -disc
    u1 = p + disc
    u2 = -b * c / u1 if u1 != 0 else 0.0
    return d + u1, d + u2


def _qr_sweep(w: np.ndarray, shift: complex) -> None:
    m = w.shape[0]
    w[np.diag_indices(m)] -= shift
    rotations = []
    for k in range(m - 1):
        a, b = w[k, k], w[k + 1, k]
        r = np.hypot(abs(a), abs(b))
        c, s = (a / r, b / r) if r != 0 else (1.0, 0.0)
        g = np.array([[np.conj(c), np.conj(s)], [-s, c]])
        w[k:k + 2, k:] = g @ w[k:k + 2, k:]
        w[k + 1, k] = 0.0
        rotations.append(g)
    for k, g in enumerate(rotations):
        w[: k + 2, k:k + 2] = w[: k + 2, k:k + 2] @ g.conj().T
    w[np.diag_indices(m)] += shift


def qr_eigenvalues(a: np.ndarray) -> np.ndarray:
    """All eigenvalues of a small dense square matrix.

    Raises:
        EigenSolverError: If more than ``100 * n`` sweeps are needed.
    """
    h = hessenberg(a)
    n = h.shape[0]
    eigenvalues = np.zeros(n, dtype=complex)
    norm = np.abs(h).max() if n else 0.0
    hi = n - 1
    sweeps = 0
    stalled = 0
    while hi >= 0:
        lo = hi
        while lo > 0:
            scale = abs(h[lo - 1, lo - 1]) + abs(h[lo, lo])
            if scale == 0.0:
                scale = norm
            if abs(h[lo, lo - 1]) <= DEFLATION_TOL * scale:
                h[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            eigenvalues[hi] = h[hi, hi]
            hi -= 1
            stalled = 0
            continue
        if lo == hi - 1:
            eigenvalues[hi - 1], eigenvalues[hi] = _eig2(
                h[hi - 1, hi - 1], h[hi - 1, hi], h[hi, hi - 1], h[hi, hi]
            )
            hi -= 2
            stalled = 0
            continue
        sweeps += 1
        stalled += 1
        if sweeps > 100 * n:
            raise EigenSolverError(
                f"Shifted QR did not converge after {100 * n} sweeps ({hi + 1} eigenvalues left)"
            )
        window = h[lo:hi + 1, lo:hi + 1]
        if stalled % 10 == 0:
            shift = window[-1, -1] + 0.75 * abs(window[-1, -2])
        else:
            mu1, mu2 = _eig2(window[-2, -2], window[-2, -1], window[-1, -2], window[-1, -1])
            shift = mu1 if abs(mu1 - window[-1, -1]) < abs(mu2 - window[-1, -1]) else mu2
        _qr_sweep(window, shift)
    logger.debug("qr_eigenvalues: n=%d, %d sweeps", n, sweeps)
    return eigenvalues


def stiffness_spectrum(jacobian: Jacobian, s: StateVector) -> np.ndarray:
    """Eigenvalues of ``jacobian(s.t, s.y)``."""
    j = np.asarray(jacobian(s.t, s.y), dtype=float)
    if j.ndim != 2 or j.shape[0] != j.shape[1]:
        raise DimensionError(f"Jacobian must be square (got shape {j.shape})")
    if j.shape[0] != np.asarray(s.y).size:
        raise DimensionError(f"Jacobian is {j.shape[0]}x{j.shape[0]} for a state of size {s.y.size}")
    if j.shape[0] > MAX_DENSE_SIZE:
        raise DimensionError(f"Dense eigen-solve supports at most {MAX_DENSE_SIZE} species")
    return qr_eigenvalues(j)


def stiffness_ratio(spectrum: Sequence[complex]) -> float:
    """max|lambda| over the smallest non-negligible |lambda|.

    Eigenvalues below ``1e-12 * max|lambda|`` count as zero and are excluded.

    Raises:
        ValueError: For an empty spectrum.
        UndefinedStiffnessError: When every eigenvalue is zero.
    """
    magnitudes = np.abs(np.asarray(spectrum, dtype=complex))
    if magnitudes.size == 0:
        raise ValueError("stiffness_ratio needs a non-empty spectrum")
    largest = magnitudes.max()
    if largest == 0.0:
        raise UndefinedStiffnessError("Stiffness ratio undefined: all eigenvalues are zero")
    smallest = magnitudes[magnitudes >= ZERO_EIGENVALUE_TOL * largest].min()
    return float(largest / max(smallest, RATIO_FLOOR))
