from .checkpoint import CheckpointError, checkpoint_load, checkpoint_save
from .network import MLP, ActorCritic, gaussian_entropy, gaussian_log_prob
from .ppo import (
    Adam, NonFiniteLoss, PPOConfig, RolloutBuffer, TrainResult, checkpoint_updates,
    gae_advantages, ppo_loss_and_grad, ppo_update, train,
)

__all__ = [
    "MLP", "ActorCritic", "Adam", "CheckpointError", "NonFiniteLoss", "PPOConfig",
    "RolloutBuffer", "TrainResult", "checkpoint_load", "checkpoint_save", "checkpoint_updates",
    "gae_advantages", "gaussian_entropy", "gaussian_log_prob", "ppo_loss_and_grad",
    "ppo_update", "train",
]
