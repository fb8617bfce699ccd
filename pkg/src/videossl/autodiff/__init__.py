"""Minimal float64 reverse-mode autodiff for the toy video networks."""

from .functional import (
    conv2d,
    conv3d,
    global_avg_pool,
    linear,
    pool2d,
    pool3d,
    relu,
    softmax,
)
from .gradcheck import grad_check
from .serialize import read_tensor, tensor_from_bytes, tensor_to_bytes, write_tensor
from .tensor import (
    Graph,
    Node,
    Parameter,
    Tensor,
    as_tensor,
    backward,
    concat,
    getitem,
    log,
    mean_all,
    mul,
    no_grad,
    reshape,
    sum_all,
    sum_rows,
)

__all__ = [
    "Graph", "Node", "Parameter", "Tensor", "as_tensor", "backward", "concat",
    "conv2d", "conv3d", "getitem", "global_avg_pool", "grad_check", "linear", "log",
    "mean_all", "mul", "no_grad", "pool2d", "pool3d", "read_tensor", "relu", "reshape",
    "softmax", "sum_all", "sum_rows", "tensor_from_bytes", "tensor_to_bytes", "write_tensor",
]
