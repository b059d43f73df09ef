"""Synthetic multi-skeleton SEM datasets with latent confounders."""

from bicd.datagen.dataset import SPLITS, DatasetBundle, build_dataset
from bicd.datagen.generator import GenConfig, SampleRecord, SkeletonSpec, sample_records, sample_skeleton
from bicd.datagen.io import manifest_hash, read_dataset, write_dataset
from bicd.datagen.presets import PRESET_TABLE, build_preset, preset_config, scale_counts

__all__ = [
    "SPLITS",
    "DatasetBundle",
    "GenConfig",
    "PRESET_TABLE",
    "SampleRecord",
    "SkeletonSpec",
    "build_dataset",
    "build_preset",
    "manifest_hash",
    "preset_config",
    "read_dataset",
    "sample_records",
    "sample_skeleton",
    "scale_counts",
    "write_dataset",
]
