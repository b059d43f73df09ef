"""Rank and error metrics."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from bicd.errors import ContractError


def auroc(scores, labels) -> float:
    """P(random positive outscores random negative), ties counted 1/2.

    Computed from mid-ranks (Mann-Whitney U), O(n log n).
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).astype(bool).ravel()
    if s.shape != y.shape:
        raise ContractError(f"scores and labels differ in length: {s.size} vs {y.size}")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ContractError("AUROC is undefined without both positive and negative labels")
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def mse_per_sample(pred: np.ndarray, true: np.ndarray) -> np.ndarray:
    """||pred - true||^2 / (N * D) for each sample of a [n, N, D] stack."""
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(true, dtype=np.float64)
    return np.mean(diff * diff, axis=(-2, -1))
