# Mass-action mechanisms: parsing, kinetics, built-in benchmarks
from .builtin import (
    BUILTIN_MECHANISMS,
    builtin_pollu,
    builtin_rober,
    load_mechanism,
    mechanism_source,
)
from .kinetics import (
    MassActionKinetics,
    mass_action_jacobian,
    mass_action_rhs,
    production_consumption_split,
)
from .model import Mechanism, Reaction, StateVector
from .parser import parse_mechanism, parse_qss_names, serialize_mechanism

__all__ = [
    "BUILTIN_MECHANISMS",
    "builtin_pollu",
    "builtin_rober",
    "load_mechanism",
    "MassActionKinetics",
    "mass_action_jacobian",
    "mass_action_rhs",
    "Mechanism",
    "mechanism_source",
    "parse_mechanism",
    "parse_qss_names",
    "production_consumption_split",
    "Reaction",
    "serialize_mechanism",
    "StateVector",
]
