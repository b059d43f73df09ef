"""Named synthetic benchmark settings (Syn1-Syn9)."""

from __future__ import annotations

import math
from dataclasses import replace

from bicd.datagen.dataset import DatasetBundle, build_dataset
from bicd.datagen.generator import GenConfig
from bicd.errors import ConfigError

# name: (samples per skeleton, confounders, nodes, pervasiveness)
PRESET_TABLE = {
    "syn1": (5, 1, 50, 0.7),
    "syn2": (10, 1, 50, 0.7),
    "syn3": (50, 1, 50, 0.7),
    "syn4": (50, 5, 50, 0.7),
    "syn5": (50, 10, 50, 0.7),
    "syn6": (50, 1, 20, 0.7),
    "syn7": (50, 1, 100, 0.7),
    "syn8": (50, 1, 50, 0.1),
    "syn9": (50, 1, 50, 0.4),
}
SPLIT_SKELETONS = (450, 100, 200)


def scale_counts(counts, scale: float) -> tuple[int, ...]:
    """Round half up; every nonempty split keeps at least one skeleton."""
    if scale <= 0:
        raise ConfigError(f"scale must be positive, got {scale}")
    return tuple(max(1, int(math.floor(c * scale + 0.5))) if c else 0 for c in counts)


def preset_config(name: str, scale: float = 1.0, **overrides) -> GenConfig:
    key = name.lower()
    if key not in PRESET_TABLE:
        raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(PRESET_TABLE)}")
    n, k, nodes, p = PRESET_TABLE[key]
    cfg = GenConfig(
        n_nodes=nodes,
        n_confounders=k,
        pervasiveness=p,
        samples_per_skeleton=n,
        skeletons=scale_counts(SPLIT_SKELETONS, scale),
    )
    return replace(cfg, **overrides) if overrides else cfg


def build_preset(name: str, seed: int, scale: float = 1.0, workers: int = 1, **overrides) -> DatasetBundle:
    cfg = preset_config(name, scale, **overrides)
    return build_dataset(cfg, seed, name=name.lower(), preset=name.lower(), workers=workers)
