"""Numerics core: autodiff tensors, MLP/GraphNorm layers, Adam, checkpoints."""

from . import autodiff
from .autodiff import (
    NumericError,
    ShapeError,
    Tensor,
    UnsupportedOpError,
    check_gradients,
    finite_difference_gradients,
    max_relative_error,
)
from .checkpoint import load_params, save_params
from .layers import DenseLayer, InvalidSegmentError, Mlp, graphnorm, make_mlp, xavier_uniform
from .optim import Adam, AdamState, adam_step, clip_grad_norm

__all__ = [
    "autodiff", "Tensor", "ShapeError", "NumericError", "UnsupportedOpError",
    "check_gradients", "finite_difference_gradients", "max_relative_error",
    "DenseLayer", "Mlp", "graphnorm", "make_mlp", "xavier_uniform", "InvalidSegmentError",
    "Adam", "AdamState", "adam_step", "clip_grad_norm",
    "save_params", "load_params",
]
