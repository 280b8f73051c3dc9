"""Self-contained numerics: float64 tensors, whitelisted ops, reverse-mode tape."""
from .ops import (EPS_GUARD, add, arctan_ratio, conv1d, cos, gather_rows,
                  matmul, mul, outer, reduce_sum, relu, reshape, sigmoid, sin,
                  sqrt, square, stack, sub, transpose2d)
from .tensor import Graph, Tensor, constant, parameter

__all__ = [
    "EPS_GUARD", "Graph", "Tensor", "constant", "parameter",
    "add", "sub", "mul", "matmul", "outer", "reduce_sum",
    "sigmoid", "relu", "sqrt", "square", "cos", "sin", "arctan_ratio",
    "conv1d", "gather_rows", "stack", "reshape", "transpose2d",
]
