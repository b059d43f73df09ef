"""Plain-array linear algebra kernels used by the model and the generator.

Nothing here records onto a gradient tape; :mod:`.autodiff` wraps
:func:`forward_substitution` with its adjoint.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, NumericError, StructureError

STRUCTURE_TOL = 1e-12


def check_unit_lower(w: np.ndarray, tol: float = STRUCTURE_TOL) -> None:
    """Raise :class:`StructureError` unless every matrix in ``w`` is unit lower triangular."""
    if w.ndim < 2 or w.shape[-1] != w.shape[-2]:
        raise DimensionError(f"expected square matrix, got shape {w.shape}")
    n = w.shape[-1]
    diag = np.diagonal(w, axis1=-2, axis2=-1)
    if np.any(np.abs(diag - 1.0) > tol):
        raise StructureError("matrix diagonal is not exactly one")
    upper = np.triu(w, 1) if n > 1 else np.zeros_like(w)
    if np.any(np.abs(upper) > tol):
        raise StructureError("matrix has nonzero entries above the diagonal")


def _check_solve_shapes(w: np.ndarray, rhs: np.ndarray) -> None:
    if w.ndim not in (2, 3) or rhs.ndim not in (2, 3):
        raise DimensionError(f"unit_lt_solve needs rank-2/3 operands, got {w.shape} and {rhs.shape}")
    if w.shape[-1] != rhs.shape[-2]:
        raise DimensionError(f"unit_lt_solve shape mismatch: w {w.shape} vs rhs {rhs.shape}")
    if w.ndim == 3 and rhs.ndim == 3 and w.shape[0] != rhs.shape[0]:
        raise DimensionError(f"unit_lt_solve batch mismatch: w {w.shape} vs rhs {rhs.shape}")


def forward_substitution(w: np.ndarray, rhs: np.ndarray, check: bool = True) -> np.ndarray:
    """Solve ``w @ y = rhs`` for unit lower-triangular ``w``.

    Both operands may carry a leading batch axis. Only the strictly lower part
    of ``w`` is read.
    """
    _check_solve_shapes(w, rhs)
    if check:
        check_unit_lower(w)
    batch = np.broadcast_shapes(w.shape[:-2], rhs.shape[:-2])
    n = w.shape[-1]
    y = np.zeros(batch + rhs.shape[-2:], dtype=np.float64)
    y[...] = rhs
    for i in range(1, n):
        # y_i = r_i - sum_{k<i} w_ik y_k
        y[..., i, :] -= np.einsum("...k,...kd->...d", w[..., i, :i], y[..., :i, :])
    return y


def transposed_back_substitution(w: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve ``w.T @ x = g`` for unit lower-triangular ``w`` (batched like above)."""
    batch = np.broadcast_shapes(w.shape[:-2], g.shape[:-2])
    n = w.shape[-1]
    x = np.zeros(batch + g.shape[-2:], dtype=np.float64)
    x[...] = g
    for i in range(n - 2, -1, -1):
        # x_i = g_i - sum_{k>i} w_ki x_k
        x[..., i, :] -= np.einsum("...k,...kd->...d", w[..., i + 1 :, i], x[..., i + 1 :, :])
    return x


def jacobi_singular_values(m: np.ndarray, max_sweeps: int | None = None) -> np.ndarray:
    """Singular values of a real matrix by one-sided (Hestenes) Jacobi rotations.

    Returns the values sorted in descending order. Raises :class:`NumericError`
    if the columns are not mutually orthogonal after ``max_sweeps`` sweeps
    (default ``100 * min(rows, cols)``).
    """
    a = np.array(m, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {a.shape}")
    if a.shape[0] < a.shape[1]:
        a = a.T.copy()
    rows, cols = a.shape
    if cols == 0:
        return np.zeros(0)
    if max_sweeps is None:
        max_sweeps = 100 * max(1, min(rows, cols))
    eps = 1e-15
    for _ in range(max_sweeps):
        rotated = False
        for p in range(cols - 1):
            for q in range(p + 1, cols):
                ap, aq = a[:, p], a[:, q]
                alpha = ap @ ap
                beta = aq @ aq
                gamma = ap @ aq
                if abs(gamma) <= eps * np.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * ap - s * aq
                new_q = s * ap + c * aq
                a[:, p] = new_p
                a[:, q] = new_q
        if not rotated:
            return np.sort(np.linalg.norm(a, axis=0))[::-1]
    raise NumericError(f"Jacobi SVD did not converge within {max_sweeps} sweeps")


def numerical_rank(m: np.ndarray, rel_tol: float = 1e-2) -> int:
    """Number of singular values above ``rel_tol`` times the largest one."""
    a = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NumericError("numerical_rank input has non-finite entries")
    if a.size == 0:
        return 0
    sv = jacobi_singular_values(a)
    if sv[0] == 0.0:
        return 0
    return int(np.count_nonzero(sv > rel_tol * sv[0]))
