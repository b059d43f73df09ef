"""Run orchestration and JSON reports."""

from __future__ import annotations

import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from bicd.datagen.dataset import DatasetBundle
from bicd.harness.config import TrainConfig
from bicd.harness.evaluate import Metrics, evaluate
from bicd.harness.train import TrainResult, train
from bicd.model.forward import VARIANTS


def write_json(obj, path: str | Path) -> Path:
    """Deterministic JSON (sorted keys, fixed indent, trailing newline)."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")
    return p


def run_experiment(cfg: TrainConfig, data: DatasetBundle, split: str = "test", workers: int | None = None) -> tuple[TrainResult, Metrics, float]:
    """Train, then evaluate with refinement; returns wall-clock seconds too."""
    t0 = time.perf_counter()
    result = train(cfg, data)
    metrics = evaluate(result.params, cfg, data, split, workers=workers)
    return result, metrics, time.perf_counter() - t0


def summarize(values) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return {"mean": float(np.mean(arr)), "std": std, "values": [float(v) for v in arr]}


def ablation_table(base: TrainConfig, data: DatasetBundle, seeds: list[int], split: str = "test", workers: int | None = None) -> dict:
    """All four variants over the given seeds: one row per variant with mean and sample std."""
    rows = []
    for variant in VARIANTS:
        aucs, mses, recons = [], [], []
        for seed in seeds:
            _, m, _ = run_experiment(replace(base, variant=variant, seed=seed), data, split, workers)
            aucs.append(m.auroc)
            mses.append(m.mse_c)
            recons.append(m.recon_mse)
        rows.append({"variant": variant, "auroc": summarize(aucs), "mse_c": summarize(mses), "recon_mse": summarize(recons)})
    return {"split": split, "seeds": list(seeds), "config": base.to_dict(), "rows": rows}
