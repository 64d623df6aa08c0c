"""Minimal reverse-mode differentiation engine and optimizer stack."""

from . import checkpoint
from .optim import ParameterStore, adam_step, clip_gradients, swa_finalize, swa_update
from .tensor import (
    Tensor,
    add,
    as_tensor,
    concat,
    conv2d,
    default_dtype,
    dropout,
    embedding,
    exp,
    get_default_dtype,
    getitem,
    global_avg_pool,
    instance_norm,
    layer_norm,
    leaky_relu,
    linear,
    log,
    log_softmax,
    matmul,
    mul,
    neg,
    no_grad,
    reciprocal,
    relu,
    reshape,
    segment_softmax,
    segment_sum,
    set_default_dtype,
    sigmoid,
    softmax,
    sqrt,
    stack,
    take_rows,
    tmean,
    transpose,
    tsum,
)

__all__ = [
    "ParameterStore", "Tensor", "add", "adam_step", "as_tensor", "checkpoint", "clip_gradients",
    "concat", "conv2d", "default_dtype", "dropout", "embedding", "exp", "get_default_dtype",
    "getitem", "global_avg_pool", "instance_norm", "layer_norm", "leaky_relu", "linear", "log", "log_softmax",
    "matmul", "mul", "neg", "no_grad", "reciprocal", "relu", "reshape", "segment_softmax", "segment_sum",
    "set_default_dtype", "sigmoid", "softmax", "sqrt", "stack", "swa_finalize", "swa_update",
    "take_rows", "tmean", "transpose", "tsum",
]
