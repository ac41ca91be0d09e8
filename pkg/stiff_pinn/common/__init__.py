# stiff-pinn common utilities
from .config import (
    DEFAULT_CONFIG_NAME,
    ExperimentConfig,
    find_default_config,
    load_config,
    parse_config_text,
    parse_grid,
    parse_override,
    serialize_config,
)
from .errors import (
    ClosureError,
    ConfigError,
    DifferentiationError,
    DimensionError,
    EigenSolverError,
    IntegrationError,
    MechanismError,
    MechanismSyntaxError,
    NumericalError,
    PartitionError,
    StepLimitExceeded,
    StiffPinnError,
    TrainingDivergedError,
    UndefinedStiffnessError,
)
from .io_utils import ARTIFACT_KINDS, file_digest, get_artifact_kind, read_table, write_table
from .presets import EXPERIMENT_PRESETS, get_preset
from .seeding import derive_seed, make_rng

__all__ = [
    "ARTIFACT_KINDS",
    "ClosureError",
    "ConfigError",
    "DEFAULT_CONFIG_NAME",
    "derive_seed",
    "DifferentiationError",
    "DimensionError",
    "EigenSolverError",
    "EXPERIMENT_PRESETS",
    "ExperimentConfig",
    "file_digest",
    "find_default_config",
    "get_artifact_kind",
    "get_preset",
    "IntegrationError",
    "load_config",
    "make_rng",
    "MechanismError",
    "MechanismSyntaxError",
    "NumericalError",
    "parse_config_text",
    "parse_grid",
    "parse_override",
    "PartitionError",
    "read_table",
    "serialize_config",
    "StepLimitExceeded",
    "StiffPinnError",
    "TrainingDivergedError",
    "UndefinedStiffnessError",
    "write_table",
]
