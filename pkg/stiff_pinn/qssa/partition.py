"""QSS / non-QSS species partition and its selection from a reference run."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ..common.errors import DimensionError, PartitionError
from ..integrators.trajectory import SolutionTrajectory
from ..mechanism.model import Mechanism
from ..mechanism.parser import parse_qss_names

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QssPartition:
    """Disjoint index sets whose union is every species of the mechanism."""

    qss_indices: Tuple[int, ...]
    non_qss_indices: Tuple[int, ...]

    def __post_init__(self):
        qss = tuple(int(i) for i in self.qss_indices)
        non_qss = tuple(int(i) for i in self.non_qss_indices)
        object.__setattr__(self, "qss_indices", qss)
        object.__setattr__(self, "non_qss_indices", non_qss)
        if len(set(qss)) != len(qss) or len(set(non_qss)) != len(non_qss):
            raise PartitionError("Partition index sets must not repeat species")
        if set(qss) & set(non_qss):
            raise PartitionError("QSS and non-QSS sets overlap")
        if sorted(qss + non_qss) != list(range(len(qss) + len(non_qss))):
            raise PartitionError("Partition must cover species 0..n-1 exactly once")

    @classmethod
    def from_qss(cls, qss_indices: Sequence[int], n_species: int) -> "QssPartition":
        qss = tuple(sorted(int(i) for i in qss_indices))
        if any(not 0 <= i < n_species for i in qss):
            raise PartitionError(f"QSS index out of range for {n_species} species")
        return cls(qss, tuple(i for i in range(n_species) if i not in qss))

    @property
    def n_species(self) -> int:
        return len(self.qss_indices) + len(self.non_qss_indices)

    def qss_names(self, m: Mechanism) -> Tuple[str, ...]:
        return tuple(m.species_names[i] for i in self.qss_indices)

    def non_qss_names(self, m: Mechanism) -> Tuple[str, ...]:
        return tuple(m.species_names[i] for i in self.non_qss_indices)


def species_maxima(m: Mechanism, reference: SolutionTrajectory) -> np.ndarray:
    """Per-species maximum concentration over a reference trajectory."""
    if reference.n_species != m.n_species:
        raise DimensionError(
            f"Reference trajectory has {reference.n_species} species, "
            f"mechanism has {m.n_species}"
        )
    if reference.species_names and tuple(reference.species_names) != m.species_names:
        raise DimensionError("Reference trajectory columns do not match the mechanism species")
    return reference.states.max(axis=0)


def select_qss_species(
    m: Mechanism,
    reference: SolutionTrajectory,
    threshold: float,
    consumed_only: bool = True,
) -> QssPartition:
    """Species whose maximum concentration stays strictly below ``threshold``.

    With ``consumed_only`` a species must also be consumed by at least one
    reaction; a pure product has no self-dependence in its net rate and
    cannot be closed algebraically.

    Raises:
        DimensionError: If the reference does not match the mechanism.
        PartitionError: If the reference does not cover ``m.t_span`` or
            every species would become QSS.
    """
    maxima = species_maxima(m, reference)
    t0, t1 = reference.t_span
    span = max(abs(m.t_span[1]), 1.0)
    if t0 > m.t_span[0] + 1e-12 * span or t1 < m.t_span[1] - 1e-12 * span:
        raise PartitionError(
            f"Reference covers [{t0:g}, {t1:g}], mechanism span is "
            f"[{m.t_span[0]:g}, {m.t_span[1]:g}]"
        )
    candidates = set(m.consumed_species()) if consumed_only else set(range(m.n_species))
    below = [i for i in range(m.n_species) if maxima[i] < threshold]
    skipped = [m.species_names[i] for i in below if i not in candidates]
    if skipped:
        logger.info("Below threshold but never consumed, kept as non-QSS: %s", " ".join(skipped))
    qss = [i for i in below if i in candidates]
    if len(qss) == m.n_species:
        raise PartitionError(
            f"Threshold {threshold:g} marks every species as QSS; "
            f"the reduced system would have no differential variables"
        )
    return QssPartition.from_qss(qss, m.n_species)


def serialize_partition(partition: QssPartition, m: Mechanism) -> str:
    return "QSS: " + " ".join(partition.qss_names(m)) + "\n"


def parse_partition(source_text: str, m: Mechanism) -> Optional[QssPartition]:
    """Partition from a ``QSS:`` line, or None when the text has none."""
    names = parse_qss_names(source_text)
    if names is None:
        return None
    return QssPartition.from_qss(m.indices_of(names), m.n_species)
