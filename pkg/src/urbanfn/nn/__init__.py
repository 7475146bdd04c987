"""Numpy segmentation network: operators, model, loss, optimizer, checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .loss import masked_cross_entropy
from .model import (IN_CHANNELS, N_CLASSES, PARAM_ORDER, PARAM_SHAPES,
                    arch_fingerprint, init_params, net_backward, net_forward,
                    relu_sign_pattern)
from .ops import (bilinear_resize, bilinear_resize_backward, conv2d,
                  conv2d_backward, log_softmax, log_softmax_backward, relu,
                  relu_backward)
from .optim import Adam

__all__ = [
    "Adam", "IN_CHANNELS", "N_CLASSES", "PARAM_ORDER", "PARAM_SHAPES",
    "arch_fingerprint", "bilinear_resize", "bilinear_resize_backward",
    "conv2d", "conv2d_backward", "init_params", "load_checkpoint",
    "log_softmax", "log_softmax_backward", "masked_cross_entropy",
    "net_backward", "net_forward", "relu", "relu_backward",
    "relu_sign_pattern", "save_checkpoint",
]
