"""Dense float64 tensors: a thin validation layer over numpy arrays."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, NumericError

Tensor = np.ndarray

MAX_RANK = 3


def as_tensor(data, shape: tuple[int, ...] | None = None) -> Tensor:
    """Return ``data`` as a C-contiguous float64 array of rank <= 3."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim > MAX_RANK:
        raise DimensionError(f"tensor rank {arr.ndim} exceeds {MAX_RANK}")
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionError(f"expected shape {tuple(shape)}, got {arr.shape}")
    return arr


def assert_finite(x: np.ndarray, what: str = "tensor") -> None:
    if not np.all(np.isfinite(x)):
        bad = np.argwhere(~np.isfinite(x))[0]
        raise NumericError(f"{what} has non-finite entry at index {tuple(int(i) for i in bad)}")


def strict_lower_mask(n: int) -> np.ndarray:
    """Float mask that is 1 strictly below the diagonal of an n x n matrix."""
    return np.tril(np.ones((n, n)), -1)
