"""Float64 tensors with a define-by-run tape, reverse-mode gradients and Adam."""
from .graph import (Graph, GraphError, NonFiniteError, ShapeError, Tensor, active_graph,
                    as_tensor, backward, forward, parameter)
from .gradcheck import GradCheckReport, grad_check, relative_error
from .ops import (LEAKY_SLOPE, absolute, add, affine, bias_add, columns, concat, conv3x3, custom,
                  div, gather_rows, leaky_relu, matmul, max_reduce, mean_reduce, mul, neg, reshape,
                  row_norm, sigmoid, square, sub, sum_reduce, tanh)
from .optim import Adam, AdamState, adam_step

__all__ = [
    "Graph", "GraphError", "NonFiniteError", "ShapeError", "Tensor", "active_graph", "as_tensor",
    "backward", "forward", "parameter", "GradCheckReport", "grad_check", "relative_error",
    "LEAKY_SLOPE", "absolute", "add", "affine", "bias_add", "columns", "concat", "conv3x3",
    "custom", "div", "gather_rows", "leaky_relu", "matmul", "max_reduce", "mean_reduce", "mul",
    "neg", "reshape", "row_norm", "sigmoid", "square", "sub", "sum_reduce", "tanh", "Adam",
    "AdamState", "adam_step",
]
