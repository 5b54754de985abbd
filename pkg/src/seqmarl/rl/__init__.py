from .buffer import Episode, RolloutBuffer, Transition, minibatch_indices
from .checkpoint import (
    Checkpoint,
    CheckpointError,
    CheckpointVersionError,
    FORMAT_VERSION,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
)
from .gae import compute_gae, gae_advantages
from .losses import policy_loss, standardize, value_loss
from .trainer import LOG_FIELDS, TrainConfig, Trainer

__all__ = [
    "Checkpoint", "CheckpointError", "CheckpointVersionError", "Episode",
    "FORMAT_VERSION", "LOG_FIELDS", "RolloutBuffer", "TrainConfig", "Trainer",
    "Transition", "compute_gae", "gae_advantages", "load_checkpoint",
    "minibatch_indices", "model_from_checkpoint", "policy_loss",
    "save_checkpoint", "standardize", "value_loss",
]
