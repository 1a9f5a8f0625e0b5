"""Minimal reverse-mode automatic differentiation on numpy arrays."""

from . import ops
from .check import GradCheckResult, grad_check
from .ops import (ShapeError, abs, add, broadcast_to, concat, conv2d, div, downsample2x, einsum,
                  exp, getitem, leaky_relu, linear, log, matmul, mean, mul, neg,
                  norm, pad2d, power, reshape, sigmoid, softplus, sqrt, sub, sum,
                  transpose, unfold, upsample2x)
from .tensor import (GraphError, Tensor, as_tensor, backward, enable_grad, grad,
                     graph_nodes, is_grad_enabled, no_grad)

__all__ = [
    "GradCheckResult", "GraphError", "ShapeError", "Tensor", "abs", "add", "broadcast_to",
    "as_tensor", "backward", "concat", "conv2d", "div", "downsample2x",
    "einsum", "enable_grad", "exp", "getitem", "grad", "grad_check",
    "graph_nodes", "is_grad_enabled", "leaky_relu", "linear", "log", "matmul",
    "mean", "mul", "neg", "no_grad", "norm", "ops", "pad2d", "power",
    "reshape", "sigmoid", "softplus", "sqrt", "sub", "sum", "transpose",
    "unfold", "upsample2x",
]
