"""Dense tensor math, reverse-mode autodiff, Adam, and small linear-algebra kernels."""

from .autodiff import Gradients, Tape, Var, backward, elementwise, masked_row_softmax, matmul, unit_lt_solve
from .linalg import forward_substitution, jacobi_singular_values, numerical_rank
from .optim import AdamState, adam_step
from .rng import RngStream, sample_gumbel_logistic
from .tensor import Tensor, as_tensor, assert_finite, strict_lower_mask

__all__ = [
    "AdamState",
    "Gradients",
    "RngStream",
    "Tape",
    "Tensor",
    "Var",
    "adam_step",
    "as_tensor",
    "assert_finite",
    "backward",
    "elementwise",
    "forward_substitution",
    "jacobi_singular_values",
    "masked_row_softmax",
    "matmul",
    "numerical_rank",
    "sample_gumbel_logistic",
    "strict_lower_mask",
    "unit_lt_solve",
]
