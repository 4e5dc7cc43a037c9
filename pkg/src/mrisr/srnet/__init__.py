"""Residual 3D CNN upsampler: layers, training, inference, checkpoints."""

from .layers import (
    ConvSpec,
    TConvSpec,
    conv3d_forward,
    conv3d_backward,
    tconv3d_forward,
    tconv3d_backward,
    relu,
    residual_add,
)
from .network import (
    NetworkParams,
    init_params,
    forward,
    backward,
    l2_loss,
    finite_difference_check,
)
from .optimizer import AdamState, init_adam_state, adam_step
from .training import TrainConfig, train
from .inference import TilePlan, infer_volume, RECEPTIVE_HALO_Z
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "ConvSpec",
    "TConvSpec",
    "conv3d_forward",
    "conv3d_backward",
    "tconv3d_forward",
    "tconv3d_backward",
    "relu",
    "residual_add",
    "NetworkParams",
    "init_params",
    "forward",
    "backward",
    "l2_loss",
    "finite_difference_check",
    "AdamState",
    "init_adam_state",
    "adam_step",
    "TrainConfig",
    "train",
    "TilePlan",
    "infer_volume",
    "RECEPTIVE_HALO_Z",
    "save_checkpoint",
    "load_checkpoint",
]
