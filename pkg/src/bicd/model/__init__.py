"""Causal-strength VAE: encoder, latent sampling, decoder and confounding estimator."""

from bicd.model.forward import (
    OMEGA_MODES,
    VARIANTS,
    ForwardOutputs,
    LatentZ,
    LossBreakdown,
    Posterior,
    StepSettings,
    confounding_score,
    decode,
    encode,
    estimate_C,
    extract_E_L,
    forward_noise_latent,
    forward_skeleton,
    loss,
    mean_adjacency,
    sample_z,
)
from bicd.model.params import ModelParams, SkeletonOffsets

__all__ = [
    "OMEGA_MODES",
    "VARIANTS",
    "ForwardOutputs",
    "LatentZ",
    "LossBreakdown",
    "ModelParams",
    "Posterior",
    "SkeletonOffsets",
    "StepSettings",
    "confounding_score",
    "decode",
    "encode",
    "estimate_C",
    "extract_E_L",
    "forward_noise_latent",
    "forward_skeleton",
    "loss",
    "mean_adjacency",
    "sample_z",
]
