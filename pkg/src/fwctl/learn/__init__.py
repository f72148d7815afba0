"""Function approximation and model-based training utilities."""

from .nets import Adam, Mlp, adam_step, mlp_apply, mlp_grad
from .replay import ReplayBuffer
from .tdmpc import LearnedModel, ToldConfig, ToldLite, caps_loss, load_checkpoint
from .train import TrainConfig, train_tdmpc_lite

__all__ = [
    "Mlp", "Adam", "mlp_apply", "mlp_grad", "adam_step",
    "ReplayBuffer",
    "ToldLite", "ToldConfig", "LearnedModel", "caps_loss", "load_checkpoint",
    "TrainConfig", "train_tdmpc_lite",
]
