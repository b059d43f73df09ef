"""Training and evaluation settings."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from bicd.errors import ConfigError
from bicd.model.forward import ENCODER_ADJ, OMEGA_MODES, VARIANTS


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    beta: float = 1.0
    p0: float = 0.3
    tau_start: float = 1.0
    tau_end: float = 0.3
    # Skeletons whose gradients are summed before each Adam step.
    batch_skeletons: int = 1
    seed: int = 0
    variant: str = "none"
    omega_mode: str = "rank"
    dropout: float = 0.0
    mask_rate: float = 0.3
    hidden: int = 64
    hidden_att: int = 16
    enc_init: float = 0.1
    # Adam learning rate for per-skeleton posterior offsets, in training and refinement.
    offset_lr: float = 3e-2
    refine_steps: int = 600
    encoder_adj: str = "sampled"
    patience: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_skeletons < 1 or self.refine_steps < 0 or self.patience < 0:
            raise ConfigError("epochs, refine_steps and patience must be non-negative; batch_skeletons positive")
        if min(self.hidden, self.hidden_att) < 1:
            raise ConfigError("hidden widths must be positive")
        if self.lr <= 0 or self.offset_lr <= 0 or self.beta < 0:
            raise ConfigError("learning rates must be positive and beta non-negative")
        if not 0 < self.tau_end <= self.tau_start:
            raise ConfigError(f"need 0 < tau_end <= tau_start, got {self.tau_start} -> {self.tau_end}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {', '.join(VARIANTS)}")
        if self.omega_mode not in OMEGA_MODES:
            raise ConfigError(f"unknown omega mode {self.omega_mode!r}; expected one of {', '.join(OMEGA_MODES)}")
        if not 0.0 < self.p0 < 1.0:
            raise ConfigError("p0 must lie in (0, 1)")
        if self.encoder_adj not in ENCODER_ADJ:
            raise ConfigError(f"unknown encoder adjacency {self.encoder_adj!r}; expected one of {', '.join(ENCODER_ADJ)}")
        if not 0.0 <= self.dropout < 1.0 or not 0.0 <= self.mask_rate < 1.0:
            raise ConfigError("dropout and mask_rate must lie in [0, 1)")

    def tau_at(self, epoch: int) -> float:
        """Geometric anneal from tau_start (first epoch) to tau_end (last epoch)."""
        if self.epochs <= 1:
            return self.tau_start
        frac = epoch / (self.epochs - 1)
        return self.tau_start * (self.tau_end / self.tau_start) ** frac

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {', '.join(sorted(unknown))}")
        return cls(**d)
