# Physics-informed networks: model, residual loss, Adam training, evaluation
from .evaluation import eval_grid, evaluate_rmse, predict_full_state, reconstruct_qss_profile
from .loss import LossTerms, record_rhs, residual_loss, trained_species
from .model import (
    MlpModel,
    flat_gradient,
    forward,
    hard_ic_transform,
    load_checkpoint,
    predict,
    record_params,
    record_prediction,
    save_checkpoint,
    xavier_bound,
    xavier_init,
)
from .optim import AdamState, adam_step
from .training import (
    LossRecord,
    TrainingConfig,
    TrainingResult,
    loss_and_gradient,
    sample_collocation,
    train,
)

__all__ = [
    "adam_step",
    "AdamState",
    "eval_grid",
    "evaluate_rmse",
    "flat_gradient",
    "forward",
    "hard_ic_transform",
    "load_checkpoint",
    "loss_and_gradient",
    "LossRecord",
    "LossTerms",
    "MlpModel",
    "predict",
    "predict_full_state",
    "reconstruct_qss_profile",
    "record_params",
    "record_prediction",
    "record_rhs",
    "residual_loss",
    "sample_collocation",
    "save_checkpoint",
    "trained_species",
    "train",
    "TrainingConfig",
    "TrainingResult",
    "xavier_bound",
    "xavier_init",
]
