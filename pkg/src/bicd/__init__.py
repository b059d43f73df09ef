"""Causal-strength variational inference for multi-skeleton data with latent confounders."""

__version__ = "0.1.0"
