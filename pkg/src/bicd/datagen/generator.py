"""Random linear SEMs with latent confounders.

Node ``j`` is generated as ``x_j = sum_i A[j, i] x_i + sum_k B[j, k] l_k + e_j``
with ``A`` strictly lower triangular, so node index order is a topological
order. ``A[j, i] != 0`` encodes the edge ``x_i -> x_j``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from bicd.errors import ConfigError
from bicd.numerics.linalg import forward_substitution
from bicd.numerics.rng import RngStream

GRAPH_MODEL = "erdos-renyi"


@dataclass(frozen=True)
class GenConfig:
    n_nodes: int
    n_confounders: int
    pervasiveness: float
    samples_per_skeleton: int
    skeletons: tuple[int, int, int] = (450, 100, 200)
    expected_degree: float = 5.0
    weight_low: float = 0.5
    weight_high: float = 1.5
    noise_sigma: float = 0.5
    dim: int = 1
    endogenous_fraction: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "skeletons", tuple(int(s) for s in self.skeletons))
        if self.n_nodes < 2:
            raise ConfigError(f"n_nodes must be at least 2, got {self.n_nodes}")
        if self.n_confounders < 0:
            raise ConfigError(f"n_confounders must be non-negative, got {self.n_confounders}")
        if not 0.0 < self.pervasiveness <= 1.0:
            raise ConfigError(f"pervasiveness must lie in (0, 1], got {self.pervasiveness}")
        if self.samples_per_skeleton < 1 or self.dim < 1:
            raise ConfigError("samples_per_skeleton and dim must be positive")
        if len(self.skeletons) != 3 or min(self.skeletons) < 0 or self.skeletons[0] < 1:
            raise ConfigError(f"skeleton counts must be (train>0, valid>=0, test>=0), got {self.skeletons}")
        if not 0.0 < self.expected_degree <= self.n_nodes - 1:
            raise ConfigError(
                f"expected_degree must lie in (0, N-1] = (0, {self.n_nodes - 1}], got {self.expected_degree}"
            )
        if not 0.0 < self.weight_low <= self.weight_high:
            raise ConfigError("weight range must satisfy 0 < low <= high")
        if self.noise_sigma < 0.0:
            raise ConfigError("noise_sigma must be non-negative")
        if not 0.0 <= self.endogenous_fraction <= 1.0:
            raise ConfigError("endogenous_fraction must lie in [0, 1]")

    @property
    def edge_prob(self) -> float:
        return self.expected_degree / (self.n_nodes - 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["skeletons"] = list(self.skeletons)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        return cls(**d)


@dataclass
class SkeletonSpec:
    id: int
    A: np.ndarray  # [N, N], strictly lower
    B: np.ndarray  # [N, K]
    noise_sigma: float
    # Observed parent of each confounder (-1 = exogenous) and its edge weight.
    confounder_parent: np.ndarray = field(default=None)
    confounder_parent_weight: np.ndarray = field(default=None)

    def __post_init__(self):
        k = self.B.shape[1]
        if self.confounder_parent is None:
            self.confounder_parent = np.full(k, -1, dtype=np.int64)
        if self.confounder_parent_weight is None:
            self.confounder_parent_weight = np.zeros(k)

    @property
    def n_nodes(self) -> int:
        return self.A.shape[0]

    @property
    def n_confounders(self) -> int:
        return self.B.shape[1]

    @property
    def edges(self) -> np.ndarray:
        """Boolean [N, N] ground-truth adjacency."""
        return self.A != 0.0


@dataclass
class SampleRecord:
    X: np.ndarray  # [N, D]
    L_true: np.ndarray  # [K, D]
    E_true: np.ndarray  # [N, D]
    C_true: np.ndarray  # [N, D]


def _signed_weights(rng: RngStream, shape, low: float, high: float) -> np.ndarray:
    return rng.signs(shape) * rng.uniform(low, high, shape)


def sample_skeleton(cfg: GenConfig, rng: RngStream, skeleton_id: int = 0) -> SkeletonSpec:
    n, k = cfg.n_nodes, cfg.n_confounders
    present = np.tril(rng.random((n, n)) < cfg.edge_prob, -1)
    A = np.where(present, _signed_weights(rng, (n, n), cfg.weight_low, cfg.weight_high), 0.0)
    loaded = rng.random((n, k)) < cfg.pervasiveness
    B = np.where(loaded, _signed_weights(rng, (n, k), cfg.weight_low, cfg.weight_high), 0.0)

    parent = np.full(k, -1, dtype=np.int64)
    parent_w = np.zeros(k)
    if cfg.endogenous_fraction > 0.0 and k > 0:
        rewire = rng.random(k) < cfg.endogenous_fraction
        picks = rng.integers(0, n - 1, k)
        pw = _signed_weights(rng, k, cfg.weight_low, cfg.weight_high)
        for c in np.flatnonzero(rewire):
            parent[c] = picks[c]
            parent_w[c] = pw[c]
            # A confounder may only load on descendants of its parent in index order.
            B[: picks[c] + 1, c] = 0.0
    return SkeletonSpec(skeleton_id, A, B, cfg.noise_sigma, parent, parent_w)


def sample_records(spec: SkeletonSpec, n: int, dim: int, rng: RngStream) -> list[SampleRecord]:
    """Draw ``n`` samples one after another, so a smaller ``n`` yields a prefix."""
    N, K = spec.n_nodes, spec.n_confounders
    w = np.eye(N) - spec.A
    endogenous = np.flatnonzero(spec.confounder_parent >= 0)
    out = []
    for _ in range(n):
        L = rng.normal((K, dim))
        E = rng.normal((N, dim), scale=spec.noise_sigma)
        if endogenous.size:
            X = _recursive_endogenous(spec, L, E)
        else:
            X = forward_substitution(w, spec.B @ L + E, check=False)
        C = forward_substitution(w, spec.B @ L, check=False)
        out.append(SampleRecord(X, L, E, C))
    return out


def _recursive_endogenous(spec: SkeletonSpec, L: np.ndarray, E: np.ndarray) -> np.ndarray:
    # Confounders with an observed parent p get l_k += w * x_p once x_p is known;
    # L is updated in place so the stored L_true is the realized value.
    N = spec.n_nodes
    X = np.zeros_like(E)
    pending = {c: int(p) for c, p in enumerate(spec.confounder_parent) if p >= 0}
    for j in range(N):
        X[j] = spec.A[j, :j] @ X[:j] + spec.B[j] @ L + E[j]
        for c, p in list(pending.items()):
            if p == j:
                L[c] += spec.confounder_parent_weight[c] * X[j]
                del pending[c]
    return X
