"""Training configuration, collocation sampling and the Adam training loop."""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..autodiff.tape import GradientResult, Tape, backward
from ..common.errors import ConfigError, DimensionError, TrainingDivergedError
from ..common.seeding import COLLOCATION, SHUFFLE, make_rng
from .loss import System, residual_loss, trained_species
from .model import MlpModel, flat_gradient
from .optim import AdamState, adam_step

logger = logging.getLogger(__name__)

SAMPLINGS = ("log-uniform", "uniform")
TRANSFORMS = ("hard-ic", "none")


def _optional_tuple(values) -> Optional[Tuple[float, ...]]:
    return None if values is None else tuple(float(v) for v in values)


@dataclass(frozen=True)
class TrainingConfig:
    """Everything that determines one training run besides the system."""

    n_collocation: int = 2500
    t_min: float = 1e-5
    t_max: float = 1e5
    sampling: str = "log-uniform"
    batch_size: int = 128
    learning_rate: float = 1e-3
    max_updates: int = 100_000
    species_weights: Optional[Tuple[float, ...]] = None
    rng_seed: int = 0
    output_transform: str = "hard-ic"
    y_ref_scale: Optional[Tuple[float, ...]] = None
    ic_weights: Optional[Tuple[float, ...]] = None
    log_every: int = 100
    plateau_window: int = 10_000

    def __post_init__(self):
        for name in ("species_weights", "y_ref_scale", "ic_weights"):
            object.__setattr__(self, name, _optional_tuple(getattr(self, name)))
        if not 0 < self.t_min <= self.t_max:
            raise ConfigError(f"Need 0 < t_min <= t_max (got {self.t_min}, {self.t_max})")
        if self.sampling not in SAMPLINGS:
            raise ConfigError(f"Unknown sampling '{self.sampling}'. Valid: {', '.join(SAMPLINGS)}")
        if self.output_transform not in TRANSFORMS:
            raise ConfigError(
                f"Unknown output_transform '{self.output_transform}'. Valid: {', '.join(TRANSFORMS)}"
            )
        if self.n_collocation < 1:
            raise ConfigError("n_collocation must be positive")
        if not 1 <= self.batch_size <= self.n_collocation:
            raise ConfigError(
                f"batch_size must be in [1, n_collocation={self.n_collocation}] (got {self.batch_size})"
            )
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive (got {self.learning_rate})")
        if self.max_updates < 0:
            raise ConfigError("max_updates must be >= 0")
        if self.log_every < 1:
            raise ConfigError("log_every must be >= 1")
        for name in ("species_weights", "y_ref_scale", "ic_weights"):
            values = getattr(self, name)
            if values is not None and any(not v > 0 for v in values):
                raise ConfigError(f"{name} entries must be positive")

    def weights_for(self, n_species: int) -> np.ndarray:
        """Residual weights: explicit, else 1/scale^2 from ``y_ref_scale``, else ones."""
        if self.species_weights is not None:
            weights = np.array(self.species_weights)
        elif self.y_ref_scale is not None:
            weights = 1.0 / np.array(self.y_ref_scale) ** 2
        else:
            weights = np.ones(n_species)
        if weights.shape != (n_species,):
            raise DimensionError(f"{weights.size} species weights for {n_species} trained species")
        return weights


@dataclass(frozen=True)
class LossRecord:
    step: int
    total_loss: float
    per_species_loss: Tuple[float, ...]
    wall_time: float


@dataclass
class TrainingResult:
    model: MlpModel
    history: List[LossRecord] = field(default_factory=list)
    updates: int = 0
    excluded_points: int = 0
    stopped_early: bool = False


LossSink = Callable[[LossRecord], None]


def sample_collocation(cfg: TrainingConfig, rng: np.random.Generator) -> np.ndarray:
    """``n_collocation`` times, log-uniform or uniform over [t_min, t_max]."""
    if cfg.sampling == "log-uniform":
        exponents = rng.uniform(np.log10(cfg.t_min), np.log10(cfg.t_max), size=cfg.n_collocation)
        return 10.0 ** exponents
    return rng.uniform(cfg.t_min, cfg.t_max, size=cfg.n_collocation)


def loss_and_gradient(
    model: MlpModel,
    system: System,
    t_batch: np.ndarray,
    weights: np.ndarray,
    ic_weights: Optional[Sequence[float]] = None,
    guess: Optional[np.ndarray] = None,
):
    """Build a fresh tape, record the loss and run the backward pass."""
    tape = Tape()
    loss, terms = residual_loss(tape, model, system, t_batch, weights, ic_weights, guess)
    gradient = flat_gradient(model, backward(tape, loss))
    return GradientResult(float(loss.value), gradient), terms


def train(
    model: MlpModel,
    system: System,
    cfg: TrainingConfig,
    sinks: Sequence[LossSink] = (),
) -> TrainingResult:
    """Mini-batch Adam on the residual loss.

    Collocation points are sampled once and reshuffled every epoch. A
    :class:`LossRecord` goes to every sink each ``log_every`` updates and
    after the last one. Training stops early when the mini-batch loss has
    not improved for ``plateau_window`` updates (0 disables).

    Raises:
        TrainingDivergedError: On a non-finite loss or gradient.
    """
    species = trained_species(system)
    if model.n_outputs != len(species):
        raise DimensionError(f"Model has {model.n_outputs} outputs, system trains {len(species)} species")
    weights = cfg.weights_for(len(species))
    result = TrainingResult(model=model)
    if cfg.max_updates == 0:
        return result

    times = sample_collocation(cfg, make_rng(cfg.rng_seed, COLLOCATION))
    shuffler = make_rng(cfg.rng_seed, SHUFFLE)
    closure_cache: Optional[np.ndarray] = None

    params = model.flatten()
    state = AdamState.zeros(params.size)
    best, best_update = np.inf, 0
    start = time.perf_counter()
    order = np.empty(0, dtype=int)
    cursor = 0
    current = model

    for update in range(cfg.max_updates):
        if cursor >= order.size:
            order = shuffler.permutation(times.size)
            cursor = 0
        batch = order[cursor:cursor + cfg.batch_size]
        cursor += cfg.batch_size

        guess = closure_cache[batch] if closure_cache is not None else None
        gradient, terms = loss_and_gradient(current, system, times[batch], weights, cfg.ic_weights, guess)
        if terms.y_qss is not None:
            if closure_cache is None:
                closure_cache = np.full((times.size, terms.y_qss.shape[-1]), np.nan)
            closure_cache[batch] = terms.y_qss
        result.excluded_points += terms.excluded_points

        if not np.isfinite(gradient.loss_value):
            raise TrainingDivergedError(
                f"Non-finite loss at update {update}",
                {
                    "update": update,
                    "loss": gradient.loss_value,
                    "per_species": terms.per_species.tolist(),
                    "parameter_norm": float(np.linalg.norm(params)),
                },
            )

        last = update == cfg.max_updates - 1
        plateau = bool(cfg.plateau_window) and gradient.loss_value >= best and (
            update - best_update >= cfg.plateau_window
        )
        if update % cfg.log_every == 0 or last or plateau:
            record = LossRecord(
                step=update,
                total_loss=gradient.loss_value,
                per_species_loss=tuple(float(v) for v in terms.per_species),
                wall_time=time.perf_counter() - start,
            )
            result.history.append(record)
            for sink in sinks:
                sink(record)

        params, state = adam_step(params, gradient.gradient, state, cfg.learning_rate)
        current = current.with_flat(params)
        result.updates = update + 1

        if gradient.loss_value < best:
            best, best_update = gradient.loss_value, update
        elif plateau:
            logger.info("Loss plateau: no improvement for %d updates, stopping", cfg.plateau_window)
            result.stopped_early = True
            break

    result.model = current
    return result
