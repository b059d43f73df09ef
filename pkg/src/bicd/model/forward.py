"""Forward pass of the causal-strength VAE and its noise-latent baseline.

Every function accepts parameters as a mapping of name to either a plain
array or a :class:`~bicd.numerics.autodiff.Var`; with plain arrays nothing is
recorded on a tape.

Shapes: a sample is X[N, D]; a skeleton's samples stack to X[n, N, D]. When a
stack is encoded, the pairwise scores are pooled over the sample axis so the
whole skeleton shares one posterior over its graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from bicd.errors import ConfigError, ContractError, NumericError
from bicd.numerics import autodiff as ad
from bicd.numerics.linalg import numerical_rank
from bicd.numerics.rng import RngStream, sample_gumbel_logistic
from bicd.numerics.tensor import strict_lower_mask

VARIANTS = ("none", "no-omega", "no-z", "no-c")
OMEGA_MODES = ("rank", "norm")
ENCODER_ADJ = ("sampled", "mean")
RANK_TOL = 1e-2

Params = Mapping[str, Any]


@dataclass
class Posterior:
    logits: Any  # [N, N], zero off support
    prob: Any  # [N, N] = sigmoid(logits) on support, 0 elsewhere
    strength: Any  # [N, N], zero off support
    support: np.ndarray  # bool [N, N], strictly lower
    x_used: Any = None  # X after input dropout, reused by the extraction step


@dataclass
class LatentZ:
    z: Any  # [..., N, N] unit lower triangular
    gates: Any
    tau: float


@dataclass
class LossBreakdown:
    recon_plain: Any
    recon_conf: Any
    l_rc: Any
    kl_gate: Any
    kl_strength: Any
    kl_latent: Any
    beta: float
    total: Any

    def values(self) -> dict[str, float]:
        out = {}
        for k in ("recon_plain", "recon_conf", "l_rc", "kl_gate", "kl_strength", "kl_latent", "total"):
            out[k] = float(ad.value_of(getattr(self, k)))
        return out


@dataclass
class ForwardOutputs:
    xhat: Any
    E: Any
    L: Any
    C: Any
    w: Any
    omega: np.ndarray
    post: Posterior
    parts: LossBreakdown
    extra: dict = field(default_factory=dict)


def _check_dim(X, params: Params) -> int:
    D = ad.value_of(params["W_enc"]).shape[0]
    shape = np.shape(ad.value_of(X))
    if len(shape) not in (2, 3) or shape[-1] != D:
        raise ConfigError(f"input of shape {shape} does not match model dimension D={D}")
    return D


def _mlp(h, params: Params, prefix: str):
    return ad.add(ad.matmul(ad.elu(ad.add(ad.matmul(h, params[f"{prefix}_W1"]), params[f"{prefix}_b1"])), params[f"{prefix}_W2"]), params[f"{prefix}_b2"])


def encode(
    X,
    params: Params,
    dropout_on: bool = False,
    rng: RngStream | None = None,
    dropout: float = 0.1,
    offsets: Params | None = None,
) -> Posterior:
    """Edge logits and strengths from scaled dot-product attention scores.

    ``logits[i, j] = (x_i W_Q) . (x_j W_K) / sqrt(H_att) + edge_bias`` for j < i,
    and the strengths use ``W_S`` in place of ``W_K``. A stacked input pools
    the scores by averaging over samples.
    """
    _check_dim(X, params)
    X = ad.value_of(X) if not isinstance(X, ad.Var) else X
    if dropout_on and dropout > 0.0:
        if rng is None:
            raise ContractError("dropout needs an rng")
        keep = (rng.random(np.shape(ad.value_of(X))) >= dropout) / (1.0 - dropout)
        X = ad.mul(X, keep)
    h_att = ad.value_of(params["W_Q"]).shape[1]
    scale = 1.0 / math.sqrt(h_att)
    q = ad.matmul(X, params["W_Q"])
    logits = ad.mul(ad.matmul(q, ad.transpose(ad.matmul(X, params["W_K"]))), scale)
    strength = ad.mul(ad.matmul(q, ad.transpose(ad.matmul(X, params["W_S"]))), scale)
    if np.ndim(ad.value_of(logits)) == 3:
        logits, strength = ad.mean(logits, axis=0), ad.mean(strength, axis=0)
    logits = ad.add(logits, params["edge_bias"])
    if offsets is not None:
        logits = ad.add(logits, offsets["d_logit"])
        strength = ad.add(strength, offsets["d_strength"])
    n = np.shape(ad.value_of(logits))[-1]
    support = strict_lower_mask(n) > 0
    m = support.astype(np.float64)
    logits = ad.mul(logits, m)
    return Posterior(logits, ad.mul(ad.sigmoid(logits), m), ad.mul(strength, m), support, X)


def sample_z(post: Posterior, tau: float, rng: RngStream, hard: bool = False, batch: tuple[int, ...] = ()) -> LatentZ:
    """Binary-concrete gates ``G = sigmoid((logits + logistic noise) / tau)``; ``z = I - G * S``."""
    if tau <= 0:
        raise ContractError(f"temperature must be positive, got {tau}")
    n = post.support.shape[0]
    m = post.support.astype(np.float64)
    noise = sample_gumbel_logistic(rng, tuple(batch) + (n, n)) * m
    pre = ad.add(post.logits, noise)
    if hard:
        gates = (ad.value_of(pre) > 0.0) * m
    else:
        gates = ad.mul(ad.sigmoid(ad.mul(pre, 1.0 / tau)), m)
    z = ad.sub(np.eye(n), ad.mul(gates, post.strength))
    return LatentZ(z, gates, tau)


def mean_adjacency(post: Posterior):
    """Deterministic ``I - P * S``."""
    n = post.support.shape[0]
    return ad.sub(np.eye(n), ad.mul(post.prob, post.strength))


def extract_E_L(X, post: Posterior, params: Params, w=None):
    """``BLplusE = eLU(w @ (X W_enc))`` with ``w = I - P*S`` unless given; E and L from two MLP heads."""
    if w is None:
        w = mean_adjacency(post)
    h = ad.elu(ad.matmul(w, ad.matmul(X, params["W_enc"])))
    return h, _mlp(h, params, "E"), _mlp(h, params, "L")


def decode(z, E, params: Params, check: bool = True):
    """``X_hat = eLU(z^{-1} (E W_dec1)) W_dec2`` by forward substitution."""
    zz = z.z if isinstance(z, LatentZ) else z
    y = ad.unit_lt_solve(zz, ad.matmul(E, params["W_dec1"]), check=check)
    return ad.matmul(ad.elu(y), params["W_dec2"])


def estimate_C(X, L, params: Params):
    """``C_j = w_j x_j`` with ``w_j ∝ sigmoid(u.x_j + b_u) * sigmoid(v.[x_j; L_j] + b_v)``.

    The normalization runs in log space so that tiny sigmoid values cannot
    underflow to 0/0.
    """
    D = ad.value_of(params["u"]).shape[0]
    a = ad.add(ad.matmul(X, ad.reshape(params["u"], (D, 1))), params["b_u"])
    b = ad.add(ad.matmul(ad.concat([X, L], axis=-1), ad.reshape(params["v"], (2 * D, 1))), params["b_v"])
    log_st = ad.add(ad.log_sigmoid(a), ad.log_sigmoid(b))
    shift = np.max(ad.value_of(log_st), axis=-2, keepdims=True)
    st = ad.exp(ad.sub(log_st, shift))
    w = ad.div(st, ad.sum(st, axis=-2, keepdims=True))
    return ad.mul(w, X), ad.reshape(w, np.shape(ad.value_of(w))[:-1])


def confounding_score(L, mode: str = "rank"):
    """Fraction of nodes spanned by L: ``rank(L)/N`` (or a norm-based score). No gradient.

    ``mode="norm"`` returns ``sigmoid(log rms(L)) = rms / (1 + rms)``.
    A stacked L[n, N, D] gives one score per sample.
    """
    arr = ad.value_of(L)
    if arr.ndim == 3:
        return np.array([confounding_score(a, mode) for a in arr])
    if not np.all(np.isfinite(arr)):
        raise NumericError("confounding score got a non-finite L")
    n = arr.shape[0]
    if mode == "rank":
        return min(max(numerical_rank(arr, RANK_TOL) / n, 0.0), 1.0)
    if mode == "norm":
        rms = float(np.sqrt(np.mean(arr * arr)))
        return rms / (1.0 + rms)
    raise ConfigError(f"unknown omega mode {mode!r}; expected one of {', '.join(OMEGA_MODES)}")


def gate_kl(post: Posterior, p0: float):
    """Sum over the support of KL(Bern(P) || Bern(p0))."""
    m = post.support.astype(np.float64)
    log_p = ad.log_sigmoid(post.logits)
    log_q = ad.log_sigmoid(ad.neg(post.logits))
    p = ad.sigmoid(post.logits)
    kl = ad.add(ad.mul(p, ad.sub(log_p, math.log(p0))), ad.mul(ad.sub(1.0, p), ad.sub(log_q, math.log1p(-p0))))
    return ad.sum(ad.mul(kl, m))


def loss(X, xhat, C, omega, post: Posterior, beta: float, p0: float, use_c: bool = True, kl_latent=0.0) -> LossBreakdown:
    """``l_rc + beta * (kl_gate + kl_strength + kl_latent)`` with ``l_rc`` mixing two MSE branches by omega.

    ``use_c=False`` drops C and keeps only the plain branch.

    For stacked inputs, omega holds one value per sample and each branch is a
    per-sample MSE averaged over samples.
    """
    om = np.asarray(omega, dtype=np.float64)
    if np.any(~np.isfinite(om)) or np.any(om < 0.0) or np.any(om > 1.0):
        raise ContractError(f"omega must lie in [0, 1], got {om}")
    X = ad.value_of(X)
    axes = (-2, -1)
    rp = ad.mean(ad.square(ad.sub(X, xhat)), axis=axes)
    if use_c and C is not None:
        rc = ad.mean(ad.square(ad.sub(X, ad.add(xhat, C))), axis=axes)
        l_rc = ad.mean(ad.add(ad.mul(rc, om), ad.mul(rp, 1.0 - om)))
        rc_mean = ad.mean(rc)
    else:
        l_rc = ad.mean(rp)
        rc_mean = l_rc
    if post is None:
        # Noise-latent variant: no gate posterior, only the Gaussian latent KL.
        kg = ks = 0.0
    else:
        kg = gate_kl(post, p0)
        ks = ad.mul(ad.sum(ad.mul(post.prob, ad.square(post.strength))), 0.5)
    total = ad.add(l_rc, ad.mul(ad.add(ad.add(kg, ks), kl_latent), beta))
    return LossBreakdown(ad.mean(rp), rc_mean, l_rc, kg, ks, kl_latent, beta, total)


def gaussian_kl(mu, logvar):
    """Sum of KL(N(mu, exp(logvar)) || N(0, 1)) over entries."""
    return ad.mul(ad.sum(ad.sub(ad.add(ad.square(mu), ad.exp(logvar)), ad.add(logvar, 1.0))), 0.5)


def forward_noise_latent(X, params: Params, rng: RngStream | None, post: Posterior | None = None, keep=None, sample: bool = True):
    """Baseline with the noise E as the latent and a deterministic adjacency ``I - P*S``.

    Returns ``(X_hat, parts)`` where ``parts`` holds the adjacency, the extraction
    features, E, L, and the summed Gaussian KL of E. ``sample=False`` decodes the mean.
    """
    if post is None:
        post = encode(X, params)
    Xd = post.x_used if post.x_used is not None else X
    w = mean_adjacency(post)
    h = ad.elu(ad.matmul(w, ad.matmul(Xd, params["W_enc"])))
    mu, logvar = _mlp(h, params, "M"), _mlp(h, params, "V")
    if sample:
        eps = rng.normal(np.shape(ad.value_of(mu)))
        E = ad.add(mu, ad.mul(ad.exp(ad.mul(logvar, 0.5)), eps))
    else:
        E = mu
    E_in = ad.mul(E, keep) if keep is not None else E
    xhat = decode(w, E_in, params, check=False)
    return xhat, {"w": w, "h": h, "E": E, "L": _mlp(h, params, "L"), "kl": gaussian_kl(mu, logvar), "post": post}


@dataclass
class StepSettings:
    """Knobs for one skeleton-level forward pass.

    ``beta`` is the user-facing KL weight; the pass divides it by n*N*D so
    the KL sits on the same per-entry scale as the MSE terms.
    """

    variant: str = "none"
    tau: float = 1.0
    beta: float = 1.0
    p0: float = 0.3
    mask_rate: float = 0.3
    dropout: float = 0.0
    omega_mode: str = "rank"
    train: bool = True
    # Adjacency fed to the encoder GNN in training: the sampled z or the mean I - P*S.
    encoder_adj: str = "sampled"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {', '.join(VARIANTS)}")
        if self.omega_mode not in OMEGA_MODES:
            raise ConfigError(f"unknown omega mode {self.omega_mode!r}")
        if not 0.0 <= self.mask_rate < 1.0 or not 0.0 <= self.dropout < 1.0:
            raise ConfigError("mask_rate and dropout must lie in [0, 1)")
        if not 0.0 < self.p0 < 1.0:
            raise ConfigError("p0 must lie in (0, 1)")
        if self.encoder_adj not in ENCODER_ADJ:
            raise ConfigError(f"unknown encoder adjacency {self.encoder_adj!r}; expected one of {', '.join(ENCODER_ADJ)}")


def forward_skeleton(params: Params, X: np.ndarray, settings: StepSettings, rng: RngStream | None, offsets: Params | None = None) -> ForwardOutputs:
    """One pass over all samples X[n, N, D] of a skeleton.

    In training mode the encoder applies input dropout, the gates are sampled,
    the encoder GNN runs on the sampled ``z``, and each decoder input row of E
    is zeroed with probability ``mask_rate``. In evaluation mode everything is
    deterministic: mean gates, ``z = I - P*S``, no dropout, no masking.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    D = _check_dim(X, params)
    n, N, _ = X.shape
    train = settings.train
    if train and rng is None:
        raise ContractError("training mode needs an rng")
    post = encode(X, params, dropout_on=train, rng=rng, dropout=settings.dropout, offsets=offsets)
    keep = None
    if train and settings.mask_rate > 0.0:
        keep = (rng.random((n, N, 1)) >= settings.mask_rate).astype(np.float64)
    beta_eff = settings.beta / (n * N * D)
    extra = {}

    if settings.variant == "no-z":
        xhat, parts = forward_noise_latent(X, params, rng, post=post, keep=keep, sample=train)
        E, L, kl_latent = parts["E"], parts["L"], parts["kl"]
        kl_post = None
    else:
        if train:
            lz = sample_z(post, settings.tau, rng, batch=(n,))
            z = lz.z
            extra["gates"] = lz.gates
        else:
            z = mean_adjacency(post)
        w_enc = z if train and settings.encoder_adj == "sampled" else None
        _, E, L = extract_E_L(post.x_used, post, params, w=w_enc)
        xhat = decode(z, ad.mul(E, keep) if keep is not None else E, params, check=False)
        kl_latent = 0.0
        kl_post = post

    use_c = settings.variant != "no-c"
    if use_c:
        C, w = estimate_C(X, L, params)
    else:
        C, w = np.zeros_like(X), np.full((n, N), 1.0 / N)
    if settings.variant == "no-omega":
        omega = np.ones(n)
    elif settings.variant == "no-c":
        omega = np.zeros(n)
    else:
        omega = np.asarray(confounding_score(L, settings.omega_mode), dtype=np.float64)
    parts = loss(X, xhat, C if use_c else None, omega, kl_post, beta_eff, settings.p0, use_c=use_c, kl_latent=kl_latent)
    return ForwardOutputs(xhat, E, L, C, w, omega, post, parts, extra)
