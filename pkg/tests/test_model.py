import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bicd.errors import ConfigError, ContractError, DataError
from bicd.model import (
    ModelParams,
    Posterior,
    SkeletonOffsets,
    StepSettings,
    confounding_score,
    decode,
    encode,
    estimate_C,
    extract_E_L,
    forward_noise_latent,
    forward_skeleton,
    loss,
    sample_z,
)
from bicd.model.forward import gaussian_kl, gate_kl
from bicd.numerics import RngStream, Tape, backward
from bicd.numerics import autodiff as ad

from gradcheck import numeric_grad


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def params(D=2, H=8, Ha=8, seed=0, noise_latent=False, enc_init=1.0):
    return ModelParams.init(D, H, Ha, seed=seed, noise_latent=noise_latent, enc_init=enc_init)


def rand_post(N, rng, scale=1.0):
    sup = np.tril(np.ones((N, N)), -1) > 0
    logits = rng.normal(scale=scale, size=(N, N)) * sup
    return Posterior(logits, sigmoid(logits) * sup, rng.normal(size=(N, N)) * sup, sup)


# ---------------------------------------------------------------- encode


def test_encode_single_node_has_empty_support():
    post = encode(np.ones((1, 2)), params().arrays)
    assert post.support.sum() == 0
    assert np.all(post.prob == 0.0)


def test_encode_duplicate_rows_constant_logits():
    X = np.tile(np.array([[0.7, -1.2]]), (5, 1))
    post = encode(X, params().arrays)
    vals = post.logits[post.support]
    assert np.ptp(vals) == 0.0


def test_encode_matches_entrywise_oracle():
    p = params(seed=3)
    X = np.random.default_rng(1).normal(size=(4, 2))
    post = encode(X, p.arrays)
    q, k, s = X @ p["W_Q"], X @ p["W_K"], X @ p["W_S"]
    for i in range(4):
        for j in range(4):
            if j < i:
                exp_l = sum(q[i, h] * k[j, h] for h in range(8)) / math.sqrt(8) + float(p["edge_bias"])
                exp_s = sum(q[i, h] * s[j, h] for h in range(8)) / math.sqrt(8)
                assert abs(post.logits[i, j] - exp_l) < 1e-12
                assert abs(post.strength[i, j] - exp_s) < 1e-12
                assert abs(post.prob[i, j] - sigmoid(exp_l)) < 1e-12
            else:
                assert post.prob[i, j] == 0.0 and post.strength[i, j] == 0.0


def test_encode_stack_pools_scores():
    p = params(seed=4)
    Xs = np.random.default_rng(2).normal(size=(3, 5, 2))
    pooled = encode(Xs, p.arrays)
    singles = [encode(x, p.arrays).logits for x in Xs]
    np.testing.assert_allclose(pooled.logits, np.mean(singles, axis=0), atol=1e-12)


def test_encode_dimension_mismatch():
    with pytest.raises(ConfigError):
        encode(np.ones((3, 4)), params(D=2).arrays)


def test_encode_dropout_deterministic_and_scaled():
    p = params()
    X = np.ones((6, 2))
    a = encode(X, p.arrays, dropout_on=True, rng=RngStream(1, 0), dropout=0.5)
    b = encode(X, p.arrays, dropout_on=True, rng=RngStream(1, 0), dropout=0.5)
    np.testing.assert_array_equal(a.logits, b.logits)
    assert set(np.unique(a.x_used)) <= {0.0, 2.0}


# ---------------------------------------------------------------- sample_z


def test_saturated_gate_open_monte_carlo():
    # P(G > 0.999) = sigmoid(20 - tau * logit(0.999)) >= sigmoid(20 - 6.91) for tau <= 1.
    post = Posterior(np.array([[0.0, 0.0], [20.0, 0.0]]), None, np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([[False, False], [True, False]]))
    post.prob = sigmoid(post.logits) * post.support
    for tau in (1.0, 0.5, 0.1):
        g = sample_z(post, tau, RngStream(5, 0), batch=(100_000,)).gates[:, 1, 0]
        assert np.mean(g > 0.999) > 0.999


def test_hard_closed_gate_is_zero():
    post = Posterior(np.array([[0.0, 0.0], [-20.0, 0.0]]), None, np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([[False, False], [True, False]]))
    lz = sample_z(post, 0.5, RngStream(0, 0), hard=True, batch=(1000,))
    assert np.all(lz.gates == 0.0)
    assert np.all(lz.z == np.eye(2))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 10), st.floats(0.05, 2.0), st.integers(0, 10_000), st.booleans())
def test_z_unit_lower_triangular(N, tau, seed, hard):
    post = rand_post(N, np.random.default_rng(seed), scale=3.0)
    z = sample_z(post, tau, RngStream(seed, 1), hard=hard, batch=(3,)).z
    assert np.all(np.diagonal(z, axis1=-2, axis2=-1) == 1.0)
    assert np.all(np.triu(z, 1) == 0.0)


def test_sample_z_rejects_bad_temperature():
    with pytest.raises(ContractError):
        sample_z(rand_post(3, np.random.default_rng(0)), 0.0, RngStream(0, 0))


# ---------------------------------------------------------------- extraction and decoder


def test_extract_zero_params():
    p = params()
    zero = {k: np.zeros_like(v) for k, v in p.arrays.items()}
    zero["E_b2"] = np.array([0.5, -1.0])
    zero["L_b2"] = np.array([2.0, 3.0])
    X = np.random.default_rng(0).normal(size=(4, 2))
    post = encode(X, zero)
    h, E, L = extract_E_L(X, post, zero)
    assert np.all(h == 0.0)
    np.testing.assert_array_equal(E, np.tile([0.5, -1.0], (4, 1)))
    np.testing.assert_array_equal(L, np.tile([2.0, 3.0], (4, 1)))


def test_extract_identity_adjacency_matches_single_matmul():
    p = params(seed=2)
    X = np.random.default_rng(3).normal(size=(5, 2))
    h, E, L = extract_E_L(X, None, p.arrays, w=np.eye(5))
    hh = elu(X @ p["W_enc"])
    np.testing.assert_allclose(h, hh, atol=1e-12)
    np.testing.assert_allclose(E, elu(hh @ p["E_W1"] + p["E_b1"]) @ p["E_W2"] + p["E_b2"], atol=1e-12)


def test_extract_rows_permute_without_edges():
    p = params(seed=2)
    X = np.random.default_rng(3).normal(size=(5, 2))
    perm = np.array([3, 0, 4, 1, 2])
    _, E, _ = extract_E_L(X, None, p.arrays, w=np.eye(5))
    _, Ep, _ = extract_E_L(X[perm], None, p.arrays, w=np.eye(5))
    np.testing.assert_allclose(Ep, E[perm], atol=1e-12)


def test_decode_identity_z():
    p = params(seed=1)
    E = np.random.default_rng(0).normal(size=(4, 2))
    np.testing.assert_allclose(decode(np.eye(4), E, p.arrays), elu(E @ p["W_dec1"]) @ p["W_dec2"], atol=1e-12)


def test_decode_two_node_hand_expansion():
    p = params(seed=1)
    a = 0.8
    E = np.array([[0.3, -0.2], [1.1, 0.4]])
    pre1 = E[0] @ p["W_dec1"]
    pre2 = E[1] @ p["W_dec1"] + a * pre1
    expected = np.stack([elu(pre1), elu(pre2)]) @ p["W_dec2"]
    np.testing.assert_allclose(decode(np.array([[1.0, 0.0], [-a, 1.0]]), E, p.arrays), expected, atol=1e-12)


def test_decode_rejects_non_unit_triangular():
    from bicd.errors import StructureError

    with pytest.raises(StructureError):
        decode(np.array([[1.0, 0.5], [0.0, 1.0]]), np.ones((2, 2)), params().arrays)


@pytest.mark.parametrize("logit,expect_zero", [(20.0, False), (-20.0, True)])
def test_strength_gradient_follows_gate(logit, expect_zero):
    p = params(seed=1)
    X = np.array([[1.0, -0.5], [0.3, 0.8]])
    tape = Tape()
    s = tape.param(np.array([[0.0, 0.0], [0.9, 0.0]]))
    sup = np.array([[False, False], [True, False]])
    lg = np.array([[0.0, 0.0], [logit, 0.0]])
    post = Posterior(lg, sigmoid(lg) * sup, s, sup)
    lz = sample_z(post, 0.5, RngStream(0, 0), hard=True)
    xhat = decode(lz, X, p.arrays)
    g = backward(tape, ad.mean(ad.square(ad.sub(X, xhat))))[s]
    assert (g[1, 0] == 0.0) == expect_zero


# ---------------------------------------------------------------- estimator and omega


def test_estimator_singleton():
    p = params(seed=5)
    x = np.array([[0.4, -2.0]])
    C, w = estimate_C(x, np.ones((1, 2)), p.arrays)
    np.testing.assert_allclose(w, [1.0], atol=1e-15)
    np.testing.assert_allclose(C, x, atol=1e-15)


def test_estimator_identical_rows_uniform():
    p = params(seed=5)
    X = np.tile([[0.4, -2.0]], (6, 1))
    L = np.tile([[1.0, 0.5]], (6, 1))
    _, w = estimate_C(X, L, p.arrays)
    np.testing.assert_allclose(w, np.full(6, 1 / 6), atol=1e-15)


def test_estimator_matches_formula():
    p = params(seed=6)
    rng = np.random.default_rng(8)
    X, L = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    C, w = estimate_C(X, L, p.arrays)
    s = sigmoid(X @ p["u"] + p["b_u"])
    t = sigmoid(np.hstack([X, L]) @ p["v"] + p["b_v"])
    ref = s * t / np.sum(s * t)
    assert abs(np.sum(w) - 1.0) < 1e-12
    np.testing.assert_allclose(w, ref, atol=1e-12)
    np.testing.assert_allclose(C, ref[:, None] * X, atol=1e-12)


def test_estimator_extreme_inputs_stay_on_simplex():
    p = params(seed=6)
    X = np.array([[1e3, -1e3], [-1e3, 1e3], [0.0, 0.0]])
    _, w = estimate_C(X, X, p.arrays)
    assert np.all(np.isfinite(w)) and np.all(w >= 0)
    assert abs(np.sum(w) - 1.0) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 3), st.integers(0, 10_000))
def test_estimator_simplex_property(N, D, seed):
    p = ModelParams.init(D, 4, 4, seed=seed)
    rng = np.random.default_rng(seed)
    X, L = rng.normal(scale=3, size=(2, N, D)), rng.normal(size=(2, N, D))
    _, w = estimate_C(X, L, p.arrays)
    assert np.all(w > 0)
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-6)


def test_confounding_score_cases():
    assert confounding_score(np.zeros((4, 3))) == 0.0
    assert confounding_score(np.outer([1.0, 2, -1, 3], [0.5, 1.0])) == 0.25
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert confounding_score(rng.normal(size=(50, 1))) <= 0.02
    with pytest.raises(ConfigError):
        confounding_score(np.ones((2, 2)), mode="trace")


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 10), st.integers(1, 4), st.floats(1e-3, 1e3), st.sampled_from(["rank", "norm"]))
def test_confounding_score_in_unit_interval(N, D, scale, mode):
    L = np.random.default_rng(N * 7 + D).normal(scale=scale, size=(N, D))
    assert 0.0 <= confounding_score(L, mode) <= 1.0


# ---------------------------------------------------------------- loss


def _loss_inputs(seed=0, N=4, D=2):
    rng = np.random.default_rng(seed)
    X, xhat = rng.normal(size=(N, D)), rng.normal(size=(N, D))
    return X, xhat, rand_post(N, rng)


def test_omega_zero_blocks_estimator_gradient():
    p = params(seed=2)
    X, xhat, post = _loss_inputs()
    tape = Tape()
    pv = {k: tape.param(v) for k, v in p.arrays.items()}
    C, _ = estimate_C(X, np.ones_like(X), pv)
    out = loss(X, xhat, C, 0.0, post, 1.0, 0.3)
    g = backward(tape, out.total)
    for k in ("u", "b_u", "v", "b_v"):
        assert np.all(g[pv[k]] == 0.0)


def test_omega_one_zero_xhat_is_mse_of_c():
    X, _, post = _loss_inputs()
    C = np.random.default_rng(9).normal(size=X.shape)
    out = loss(X, np.zeros_like(X), C, 1.0, post, 1.0, 0.3)
    assert out.l_rc == pytest.approx(np.mean((X - C) ** 2), abs=1e-15)


def test_kl_zero_at_prior():
    N = 5
    sup = np.tril(np.ones((N, N)), -1) > 0
    lg = np.full((N, N), math.log(0.3 / 0.7)) * sup
    post = Posterior(lg, sigmoid(lg) * sup, np.zeros((N, N)), sup)
    assert abs(gate_kl(post, 0.3)) < 1e-15
    out = loss(np.ones((N, 1)), np.ones((N, 1)), None, 0.0, post, 1.0, 0.3)
    assert out.kl_strength == 0.0
    assert abs(out.total) < 1e-15


def test_kl_gate_matches_bernoulli_formula():
    _, _, post = _loss_inputs(seed=4)
    P = post.prob[post.support]
    ref = np.sum(P * np.log(P / 0.3) + (1 - P) * np.log((1 - P) / 0.7))
    assert gate_kl(post, 0.3) == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("omega", [-0.1, 1.5, float("nan")])
def test_loss_rejects_bad_omega(omega):
    X, xhat, post = _loss_inputs()
    with pytest.raises(ContractError):
        loss(X, xhat, np.zeros_like(X), omega, post, 1.0, 0.3)


def test_elbo_decomposition_identity():
    X, xhat, post = _loss_inputs(seed=3)
    C = np.random.default_rng(3).normal(size=X.shape)
    out = loss(X, xhat, C, 0.4, post, 0.7, 0.3)
    assert out.total == out.l_rc + 0.7 * (out.kl_gate + out.kl_strength + out.kl_latent)
    assert out.l_rc == pytest.approx(0.4 * out.recon_conf + 0.6 * out.recon_plain, abs=1e-15)


# ---------------------------------------------------------------- noise-latent baseline


def test_gaussian_kl_closed_forms():
    assert gaussian_kl(np.zeros((3, 2)), np.zeros((3, 2))) == 0.0
    mu = np.array([[0.5, -2.0]])
    assert gaussian_kl(mu, np.zeros_like(mu)) == pytest.approx(np.sum(mu**2) / 2, abs=1e-15)


def test_noise_latent_zero_noise_equals_mean_decode():
    p = params(seed=7, noise_latent=True)
    X = np.random.default_rng(0).normal(size=(5, 2))

    class ZeroRng:
        def normal(self, shape, scale=1.0):
            return np.zeros(shape)

    a, _ = forward_noise_latent(X, p.arrays, ZeroRng(), sample=True)
    b, _ = forward_noise_latent(X, p.arrays, None, sample=False)
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------- whole-model properties


def _forward_total(arrays, off, X, st_, seed):
    return forward_skeleton(arrays, X, st_, RngStream(seed, 0), off)


@pytest.mark.parametrize("variant", ["none", "no-omega", "no-z", "no-c"])
def test_end_to_end_gradient_check(variant):
    # N=6, D=3, H=H_att=8; noise is fixed by re-seeding every evaluation.
    t0 = time.perf_counter()
    p = ModelParams.init(3, 8, 8, seed=11, noise_latent=variant == "no-z", enc_init=1.0)
    off = SkeletonOffsets(6)
    rng = np.random.default_rng(12)
    off.arrays["d_logit"] = rng.normal(size=(6, 6))
    off.arrays["d_strength"] = rng.normal(scale=0.5, size=(6, 6))
    X = rng.normal(size=(2, 6, 3))
    settings_ = StepSettings(variant=variant, tau=0.7, beta=2.0, mask_rate=0.3, dropout=0.1)
    tape = Tape()
    pv = {k: tape.param(v, k) for k, v in p.arrays.items()}
    ov = {k: tape.param(v, k) for k, v in off.arrays.items()}
    grads = backward(tape, _forward_total(pv, ov, X, settings_, 3).parts.total)
    everything = {**p.arrays, **{"off." + k: v for k, v in off.arrays.items()}}
    analytic = {**{k: grads[v] for k, v in pv.items()}, **{"off." + k: grads[v] for k, v in ov.items()}}

    def total_with(name, value):
        arrs = dict(p.arrays)
        offs = dict(off.arrays)
        if name.startswith("off."):
            offs[name[4:]] = value
        else:
            arrs[name] = value
        return float(_forward_total(arrs, offs, X, settings_, 3).parts.total)

    worst = {}
    for name, value in everything.items():
        fd = numeric_grad(lambda v, name=name: total_with(name, v), value, h=1e-5)
        a = analytic[name]
        denom = max(np.linalg.norm(a), np.linalg.norm(fd), 1e-12)
        worst[name] = np.linalg.norm(a - fd) / denom
    assert max(worst.values()) < 1e-4, worst
    assert time.perf_counter() - t0 < 60


def test_variable_node_counts_share_params():
    p = params(D=1, H=8, Ha=4, seed=1)
    st_ = StepSettings()
    total = None
    for i, N in enumerate((5, 9)):
        X = np.random.default_rng(i).normal(size=(3, N, 1))
        out = forward_skeleton(p.arrays, X, st_, RngStream(0, i), SkeletonOffsets(N).arrays)
        assert out.xhat.shape == (3, N, 1)
        total = float(out.parts.total) + (total or 0.0)
    assert np.isfinite(total)


def test_forward_deterministic_given_seed():
    p = params(D=1, H=8, Ha=4, seed=1)
    X = np.random.default_rng(0).normal(size=(4, 7, 1))
    a = forward_skeleton(p.arrays, X, StepSettings(dropout=0.1), RngStream(3, 1))
    b = forward_skeleton(p.arrays, X, StepSettings(dropout=0.1), RngStream(3, 1))
    assert a.parts.values() == b.parts.values()
    assert np.asarray(a.xhat).tobytes() == np.asarray(b.xhat).tobytes()


def test_forward_invariants_each_variant():
    X = np.random.default_rng(0).normal(size=(4, 7, 1))
    for variant in ("none", "no-omega", "no-z", "no-c"):
        p = params(D=1, H=8, Ha=4, seed=1, noise_latent=variant == "no-z")
        for train in (True, False):
            out = forward_skeleton(p.arrays, X, StepSettings(variant=variant, train=train), RngStream(0, 0))
            np.testing.assert_allclose(np.sum(out.w, axis=-1), 1.0, atol=1e-6)
            assert np.all((out.omega >= 0) & (out.omega <= 1))
            assert np.all(np.triu(out.post.prob) == 0.0)
            v = out.parts.values()
            beta = out.parts.beta
            assert v["total"] == pytest.approx(v["l_rc"] + beta * (v["kl_gate"] + v["kl_strength"] + v["kl_latent"]), rel=1e-15)


def test_no_c_zero_estimator_gradient_and_no_omega_weights():
    X = np.random.default_rng(0).normal(size=(3, 6, 1))
    p = params(D=1, H=8, Ha=4, seed=2)
    tape = Tape()
    pv = {k: tape.param(v, k) for k, v in p.arrays.items()}
    out = forward_skeleton(pv, X, StepSettings(variant="no-c"), RngStream(0, 0))
    g = backward(tape, out.parts.total)
    for k in ("u", "b_u", "v", "b_v"):
        assert np.all(g[pv[k]] == 0.0)
    out = forward_skeleton(p.arrays, X, StepSettings(variant="no-omega"), RngStream(0, 0))
    assert out.parts.l_rc == out.parts.recon_conf


def test_step_settings_validation():
    with pytest.raises(ConfigError):
        StepSettings(variant="no-x")
    with pytest.raises(ConfigError):
        StepSettings(omega_mode="trace")


# ---------------------------------------------------------------- checkpoint


def test_checkpoint_round_trip(tmp_path):
    p = params(seed=3, noise_latent=True)
    p.save(tmp_path / "m.ckpt", {"lr": 0.01})
    q, hyper = ModelParams.load(tmp_path / "m.ckpt")
    assert p.equals(q)
    assert hyper == {"lr": 0.01}
    assert (tmp_path / "m.ckpt").read_bytes() == q.to_bytes({"lr": 0.01})


def test_checkpoint_corruption(tmp_path):
    data = bytearray(params().to_bytes())
    data[-20] ^= 1
    with pytest.raises(DataError, match="checksum"):
        ModelParams.from_bytes(bytes(data))
    with pytest.raises(DataError):
        ModelParams.load(tmp_path / "missing.ckpt")


def test_init_starts_at_gate_prior():
    p = ModelParams.init(1, 8, 4, seed=0, p0=0.3)
    assert sigmoid(p["edge_bias"]) == pytest.approx(0.3, abs=1e-15)
    assert not any(len(v.shape) > 0 and v.shape[0] == 17 for v in p.arrays.values())
