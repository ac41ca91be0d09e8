"""Mass-action source terms, production/consumption split and analytic Jacobian.

All array kernels accept a trailing species axis and broadcast over any
leading batch axes, so the same code serves the integrators (one state)
and PINN training (one row per collocation point).
"""

from typing import Tuple

import numpy as np

from .model import Mechanism, StateVector


class MassActionKinetics:
    """Arrays compiled once from a :class:`Mechanism`."""

    def __init__(self, mechanism: Mechanism):
        n, r = mechanism.n_species, mechanism.n_reactions
        self.n_species = n
        self.rate_constants = np.array([rx.rate_constant for rx in mechanism.reactions], dtype=float)
        # each reaction has one or two reactant slots; -1 marks an empty second slot
        self.first = np.zeros(r, dtype=int)
        self.second = np.full(r, -1, dtype=int)
        net = np.zeros((r, n))
        for j, reaction in enumerate(mechanism.reactions):
            slots = [i for i, nu in sorted(reaction.reactant_stoich.items()) for _ in range(nu)]
            self.first[j] = slots[0]
            if len(slots) == 2:
                self.second[j] = slots[1]
            for i in range(n):
                net[j, i] = reaction.net_stoich(i)
        self.produced = np.clip(net, 0.0, None)
        self.consumed = np.clip(-net, 0.0, None)
        self._bimolecular = self.second >= 0
        self._second = np.where(self._bimolecular, self.second, 0)

    def rates(self, y: np.ndarray) -> np.ndarray:
        """Reaction rates k_r * prod_j y_j^nu_rj, shape (..., n_reactions)."""
        left = y[..., self.first]
        right = np.where(self._bimolecular, y[..., self._second], 1.0)
        return self.rate_constants * left * right

    def split(self, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        rates = self.rates(y)
        return rates @ self.produced, rates @ self.consumed

    def rhs(self, y: np.ndarray) -> np.ndarray:
        omega_plus, omega_minus = self.split(y)
        return omega_plus - omega_minus

    def rate_jacobian(self, y: np.ndarray) -> np.ndarray:
        """d(rate_r)/d(y_j), shape (..., n_reactions, n_species)."""
        batch = y.shape[:-1]
        n_reactions = self.rate_constants.size
        d_rates = np.zeros(batch + (n_reactions, self.n_species))
        rows = np.arange(n_reactions)
        right = np.where(self._bimolecular, y[..., self._second], 1.0)
        # a squared reactant (2 B) lands in the same column twice, giving 2 k y_B
        d_rates[..., rows, self.first] += self.rate_constants * right
        bi = rows[self._bimolecular]
        d_rates[..., bi, self.second[bi]] += self.rate_constants[bi] * y[..., self.first[bi]]
        return d_rates

    def jacobian(self, y: np.ndarray) -> np.ndarray:
        """J_ij = d(dy_i/dt)/dy_j, shape (..., n_species, n_species)."""
        net = self.produced - self.consumed
        return np.einsum("ri,...rj->...ij", net, self.rate_jacobian(y))


def _state(m: Mechanism, s: StateVector) -> np.ndarray:
    return m.check_dimension(s.y)


def mass_action_rhs(m: Mechanism, s: StateVector) -> np.ndarray:
    return m.kinetics.rhs(_state(m, s))


def mass_action_jacobian(m: Mechanism, s: StateVector) -> np.ndarray:
    return m.kinetics.jacobian(_state(m, s))


def production_consumption_split(m: Mechanism, s: StateVector) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(omega_plus, omega_minus)`` from per-reaction net stoichiometry.

    A species appearing on both sides (``2 B -> B + C``) counts only its net
    change, so both parts stay non-negative and their difference is the RHS.
    """
    return m.kinetics.split(_state(m, s))
