"""Mass-action mechanism value types."""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np

from ..common.errors import DimensionError, MechanismError


def _frozen_stoich(stoich: Mapping[int, int], allow_zero: bool) -> Dict[int, int]:
    frozen: Dict[int, int] = {}
    for index, coefficient in stoich.items():
        if int(coefficient) != coefficient:
            raise MechanismError(f"Stoichiometric coefficient must be an integer (got {coefficient})")
        coefficient = int(coefficient)
        if coefficient < 0 or (coefficient == 0 and not allow_zero):
            raise MechanismError(f"Invalid stoichiometric coefficient {coefficient} for species #{index}")
        if coefficient:
            frozen[int(index)] = coefficient
    return frozen


@dataclass(frozen=True)
class Reaction:
    """One irreversible mass-action reaction.

    Stoichiometry maps are keyed by species index. Reactant order is limited
    to 1 or 2, which covers both built-in benchmarks.
    """

    reactant_stoich: Dict[int, int]
    product_stoich: Dict[int, int]
    rate_constant: float

    def __post_init__(self):
        object.__setattr__(self, "reactant_stoich", _frozen_stoich(self.reactant_stoich, False))
        object.__setattr__(self, "product_stoich", _frozen_stoich(self.product_stoich, True))
        k = float(self.rate_constant)
        if not np.isfinite(k) or k <= 0.0:
            raise MechanismError(f"Rate constant must be positive and finite (got {self.rate_constant})")
        object.__setattr__(self, "rate_constant", k)
        if self.order not in (1, 2):
            raise MechanismError(
                f"Only first- and second-order mass-action reactions are supported "
                f"(got total reactant order {self.order})"
            )

    @property
    def order(self) -> int:
        return sum(self.reactant_stoich.values())

    def net_stoich(self, index: int) -> int:
        return self.product_stoich.get(index, 0) - self.reactant_stoich.get(index, 0)


@dataclass(frozen=True)
class StateVector:
    t: float
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))


@dataclass(frozen=True)
class Mechanism:
    """Species list, reactions, initial state and integration span.

    Concentrations are dimensionless. ``t_span`` is in seconds.
    """

    species_names: Tuple[str, ...]
    reactions: Tuple[Reaction, ...]
    initial_concentrations: Tuple[float, ...]
    t_span: Tuple[float, float]
    provenance: str = field(default="", compare=False)

    def __post_init__(self):
        names = tuple(str(name) for name in self.species_names)
        object.__setattr__(self, "species_names", names)
        object.__setattr__(self, "reactions", tuple(self.reactions))
        object.__setattr__(
            self, "initial_concentrations", tuple(float(c) for c in self.initial_concentrations)
        )
        object.__setattr__(self, "t_span", (float(self.t_span[0]), float(self.t_span[1])))

        seen = set()
        for name in names:
            if name in seen:
                raise MechanismError(f"Duplicate species name: {name}")
            seen.add(name)
        n = len(names)
        for number, reaction in enumerate(self.reactions, start=1):
            for index in (*reaction.reactant_stoich, *reaction.product_stoich):
                if not 0 <= index < n:
                    raise MechanismError(f"Reaction {number} references unknown species #{index}")
        if len(self.initial_concentrations) != n:
            raise MechanismError(
                f"Expected {n} initial concentrations, got {len(self.initial_concentrations)}"
            )
        if any(not np.isfinite(c) or c < 0.0 for c in self.initial_concentrations):
            raise MechanismError("Initial concentrations must be finite and non-negative")
        if not self.t_span[0] < self.t_span[1]:
            raise MechanismError(f"t_span must satisfy start < end (got {self.t_span})")

    @property
    def n_species(self) -> int:
        return len(self.species_names)

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    @property
    def y0(self) -> np.ndarray:
        return np.array(self.initial_concentrations, dtype=float)

    def species_index(self, name: str) -> int:
        try:
            return self.species_names.index(name)
        except ValueError:
            raise MechanismError(f"unknown species {name}") from None

    def indices_of(self, names: Sequence[str]) -> Tuple[int, ...]:
        return tuple(self.species_index(name) for name in names)

    def consumed_species(self) -> Tuple[int, ...]:
        """Species with negative net stoichiometry in at least one reaction."""
        return tuple(
            i for i in range(self.n_species)
            if any(reaction.net_stoich(i) < 0 for reaction in self.reactions)
        )

    @cached_property
    def kinetics(self) -> "MassActionKinetics":
        from .kinetics import MassActionKinetics

        return MassActionKinetics(self)

    def check_dimension(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.ndim == 0 or y.shape[-1] != self.n_species:
            raise DimensionError(
                f"State has {y.shape[-1] if y.ndim else 0} components, "
                f"mechanism has {self.n_species} species"
            )
        return y
