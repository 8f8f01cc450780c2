"""Minimal reverse-mode autodiff, parameter stores and Adam."""

from .adam import AdamState, PlateauDecay, adam_step
from .params import ParamStore
from .tensor import (
    DisconnectedParameter,
    NonFinite,
    ShapeMismatch,
    Tensor,
    abs_diff,
    add,
    backward,
    binary_cross_entropy,
    concat,
    constant,
    cross_entropy,
    gather_rows,
    log_sigmoid,
    log_softmax,
    matmul,
    mul,
    relu,
    reshape,
    scale,
    scatter_add_rows,
    segment_log_softmax,
    sigmoid,
    softmax,
    sub,
    sum_rows,
    take,
    total,
    transpose,
)
