"""Minimal reverse-mode differentiation and optimization engine."""

from .checkpoint import load_arrays, save_arrays
from .gradcheck import GradCheckReport, grad_check
from .optim import MLPSpec, ParamStore, exponential_lr, init_mlp, mlp_forward
from .rng import derive_seeds, make_rng, rng_state_from_json, rng_state_to_json, split
from .tape import (
    Array,
    GraphTape,
    Tensor,
    add,
    add_bias,
    backward,
    concat_cols,
    constant,
    gather_rows,
    matmul,
    mean_all,
    mul,
    relu,
    scale,
    slice_cols,
    softmax,
    softmax_cross_entropy,
    softmax_cross_entropy_rows,
    square,
    straight_through,
    sub,
    sum_all,
    tanh,
)

__all__ = [
    "Array",
    "GraphTape",
    "GradCheckReport",
    "MLPSpec",
    "ParamStore",
    "Tensor",
    "add",
    "add_bias",
    "backward",
    "concat_cols",
    "constant",
    "derive_seeds",
    "exponential_lr",
    "gather_rows",
    "grad_check",
    "init_mlp",
    "load_arrays",
    "make_rng",
    "matmul",
    "mean_all",
    "mlp_forward",
    "mul",
    "relu",
    "rng_state_from_json",
    "rng_state_to_json",
    "save_arrays",
    "scale",
    "slice_cols",
    "softmax",
    "softmax_cross_entropy",
    "softmax_cross_entropy_rows",
    "split",
    "square",
    "straight_through",
    "sub",
    "sum_all",
    "tanh",
]
