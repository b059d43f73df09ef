"""Training loop.

Each gradient step processes all samples of one skeleton (or the summed
gradients of ``batch_skeletons`` skeletons). Every training skeleton also
owns a pair of posterior offsets with its own Adam state; evaluation fits
fresh offsets for unseen skeletons (see :mod:`bicd.harness.evaluate`).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from bicd.datagen.dataset import DatasetBundle
from bicd.errors import ConfigError, NumericError
from bicd.harness.config import TrainConfig
from bicd.harness.metrics import auroc
from bicd.model.forward import ForwardOutputs, StepSettings, forward_skeleton
from bicd.model.params import ModelParams, SkeletonOffsets
from bicd.numerics import AdamState, RngStream, Tape, adam_step, backward
from bicd.numerics.autodiff import value_of

log = logging.getLogger(__name__)

# Stream tags under the training seed.
ORDER, TRAIN, REFINE = 1, 2, 3


@dataclass
class TrainResult:
    params: ModelParams
    log: list[dict] = field(default_factory=list)
    seconds: float = 0.0
    epochs_run: int = 0


def step_settings(cfg: TrainConfig, tau: float, train: bool = True) -> StepSettings:
    return StepSettings(
        variant=cfg.variant,
        tau=tau,
        beta=cfg.beta,
        p0=cfg.p0,
        mask_rate=cfg.mask_rate,
        dropout=cfg.dropout,
        omega_mode=cfg.omega_mode,
        train=train,
        encoder_adj=cfg.encoder_adj,
    )


def init_params(cfg: TrainConfig, dim: int) -> ModelParams:
    return ModelParams.init(
        dim,
        hidden=cfg.hidden,
        hidden_att=cfg.hidden_att,
        seed=cfg.seed,
        noise_latent=cfg.variant == "no-z",
        enc_init=cfg.enc_init,
        p0=cfg.p0,
    )


def grad_step(
    params: ModelParams,
    X: np.ndarray,
    offsets: SkeletonOffsets,
    settings: StepSettings,
    rng: RngStream,
    shared: bool = True,
) -> tuple[ForwardOutputs, dict, dict]:
    """One forward/backward pass; returns outputs and gradients for shared params and offsets.

    With ``shared=False`` the shared weights enter as constants and only the
    offsets receive gradients.
    """
    tape = Tape()
    pv = {k: tape.param(v, k) for k, v in params.arrays.items()} if shared else params.arrays
    ov = {k: tape.param(v, k) for k, v in offsets.arrays.items()}
    out = forward_skeleton(pv, X, settings, rng, ov)
    total = out.parts.total
    if not np.isfinite(float(total.value)):
        raise NumericError("non-finite loss")
    grads = backward(tape, total)
    g_shared = {k: grads[v] for k, v in pv.items()} if shared else {}
    g_off = {k: grads[v] for k, v in ov.items()}
    return out, g_shared, g_off


def _amortized_valid(params: ModelParams, cfg: TrainConfig, data: DatasetBundle, ids: list[int]) -> dict:
    # Cheap per-epoch monitor: zero offsets, deterministic pass.
    settings = step_settings(cfg, cfg.tau_end, train=False)
    losses, scores, labels = [], [], []
    for m in ids:
        X = data.stacked(m)
        out = forward_skeleton(params.arrays, X, settings, None, SkeletonOffsets(X.shape[1]).arrays)
        losses.append(float(value_of(out.parts.total)))
        sup = out.post.support
        scores.append(np.asarray(out.post.prob)[sup])
        labels.append(data.skeletons[m].edges[sup])
    y = np.concatenate(labels)
    auc = auroc(np.concatenate(scores), y) if 0 < y.sum() < y.size else float("nan")
    return {"valid_loss": float(np.mean(losses)), "valid_auroc_amortized": auc}


def train(cfg: TrainConfig, data: DatasetBundle) -> TrainResult:
    train_ids = data.split_ids("train")
    if not train_ids:
        raise ConfigError("training split is empty")
    valid_ids = data.split_ids("valid")
    params = init_params(cfg, data.dim)
    shared_state = AdamState(lr=cfg.lr)
    offsets = {m: SkeletonOffsets(data.skeletons[m].n_nodes) for m in train_ids}
    offset_states = {m: AdamState(lr=cfg.offset_lr) for m in train_ids}
    stacks = {m: data.stacked(m) for m in train_ids}
    result = TrainResult(params)
    best_auc, best_params, stale = -np.inf, None, 0
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        tau = cfg.tau_at(epoch)
        settings = step_settings(cfg, tau)
        order = [train_ids[i] for i in RngStream(cfg.seed, (ORDER, epoch)).permutation(len(train_ids))]
        losses = []
        pending: dict | None = None
        for pos, m in enumerate(order):
            try:
                out, g_shared, g_off = grad_step(params, stacks[m], offsets[m], settings, RngStream(cfg.seed, (TRAIN, epoch, m)))
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, skeleton {m}: {exc}") from exc
            losses.append(float(value_of(out.parts.total)))
            adam_step(offset_states[m], offsets[m].arrays, g_off)
            if pending is None:
                pending = g_shared
            else:
                pending = {k: pending[k] + g for k, g in g_shared.items()}
            if (pos + 1) % cfg.batch_skeletons == 0 or pos == len(order) - 1:
                try:
                    adam_step(shared_state, params.arrays, pending)
                except NumericError as exc:
                    raise NumericError(f"epoch {epoch}, skeleton {m}: {exc}") from exc
                pending = None
        entry = {"epoch": epoch, "tau": tau, "train_loss": float(np.mean(losses))}
        if valid_ids:
            entry.update(_amortized_valid(params, cfg, data, valid_ids))
        entry["seconds"] = time.perf_counter() - t0
        result.log.append(entry)
        result.epochs_run = epoch + 1
        log.info("epoch %d  loss %.5f  tau %.3f", epoch, entry["train_loss"], tau)
        if cfg.patience and valid_ids:
            auc = entry["valid_auroc_amortized"]
            if auc > best_auc:
                best_auc, best_params, stale = auc, params.copy(), 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    if best_params is not None:
        result.params = best_params
    result.seconds = time.perf_counter() - t0
    return result
