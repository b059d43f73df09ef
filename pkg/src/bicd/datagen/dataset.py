"""Multi-skeleton dataset container and builder."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from bicd.datagen.generator import GRAPH_MODEL, GenConfig, SampleRecord, SkeletonSpec, sample_records, sample_skeleton
from bicd.errors import ConfigError
from bicd.numerics.rng import RngStream

SPLITS = ("train", "valid", "test")
FORMAT_VERSION = "1"

# Sub-stream keys under each skeleton id.
_STRUCTURE, _SAMPLES = 0, 1


@dataclass
class DatasetBundle:
    manifest: dict
    skeletons: dict[int, SkeletonSpec]
    samples: dict[int, list[SampleRecord]]

    @property
    def dim(self) -> int:
        return int(self.manifest["D"])

    def split_ids(self, split: str) -> list[int]:
        if split not in SPLITS:
            raise ConfigError(f"unknown split {split!r}; expected one of {', '.join(SPLITS)}")
        return list(self.manifest["splits"][split])

    def stacked(self, skeleton_id: int, field: str = "X") -> np.ndarray:
        """Samples of one skeleton stacked along a leading axis."""
        return np.stack([getattr(r, field) for r in self.samples[skeleton_id]])

    def subset_samples(self, n: int) -> "DatasetBundle":
        """Keep the first ``n`` samples of every skeleton."""
        manifest = dict(self.manifest)
        manifest["skeleton_info"] = [dict(s, n_samples=min(n, s["n_samples"])) for s in manifest["skeleton_info"]]
        return DatasetBundle(manifest, self.skeletons, {m: rs[:n] for m, rs in self.samples.items()})


def _make_skeleton(args):
    cfg, seed, m = args
    base = RngStream(seed, m)
    spec = sample_skeleton(cfg, base.child(_STRUCTURE), skeleton_id=m)
    return spec, sample_records(spec, cfg.samples_per_skeleton, cfg.dim, base.child(_SAMPLES))


def build_dataset(cfg: GenConfig, seed: int, name: str = "custom", preset: str | None = None, workers: int = 1) -> DatasetBundle:
    """Generate every skeleton; skeleton ``m`` uses stream ``(seed, m)`` regardless of workers."""
    n_train, n_valid, n_test = cfg.skeletons
    ids = list(range(n_train + n_valid + n_test))
    jobs = [(cfg, seed, m) for m in ids]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_make_skeleton, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_make_skeleton(j) for j in jobs]
    skeletons = {spec.id: spec for spec, _ in results}
    samples = {spec.id: recs for spec, recs in results}
    manifest = {
        "format_version": FORMAT_VERSION,
        "name": name,
        "preset": preset,
        "seed": int(seed),
        "D": cfg.dim,
        "graph_model": GRAPH_MODEL,
        "generation": cfg.to_dict(),
        "splits": {
            "train": ids[:n_train],
            "valid": ids[n_train : n_train + n_valid],
            "test": ids[n_train + n_valid :],
        },
        "skeleton_info": [
            {"id": m, "N": cfg.n_nodes, "K": cfg.n_confounders, "n_samples": cfg.samples_per_skeleton} for m in ids
        ],
    }
    return DatasetBundle(manifest, skeletons, samples)
