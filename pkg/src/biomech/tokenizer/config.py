"""Tokenizer hyperparameters and the two named profiles."""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..errors import ConfigError


@dataclass(frozen=True)
class TokenizerConfig:
    downsample_l: int = 4
    codebook_size_k: int = 512
    code_dim_d: int = 512
    beta_commit: float = 0.02
    ema_decay: float = 0.99
    reset_threshold: float = 1.0  # windowed usage below this resets the code
    reset_window_steps: int = 500
    window_frames: int = 64
    learning_rate: float = 2e-4
    batch_size: int = 32
    train_steps: int = 3000
    seed: int = 0
    in_channels: int = 34

    def __post_init__(self):
        if self.downsample_l < 1 or (self.downsample_l & (self.downsample_l - 1)) != 0:
            raise ConfigError("downsample_l must be a positive power of two")
        if self.window_frames % self.downsample_l != 0:
            raise ConfigError("window_frames must be divisible by downsample_l")
        if not 0.0 < self.ema_decay < 1.0:
            raise ConfigError("ema_decay must lie in (0, 1)")
        if self.beta_commit < 0 or self.reset_threshold < 0:
            raise ConfigError("beta_commit and reset_threshold must be non-negative")
        if min(self.codebook_size_k, self.code_dim_d, self.batch_size,
               self.train_steps, self.window_frames) < 1 or self.learning_rate <= 0:
            raise ConfigError("sizes and learning rate must be positive")

    @property
    def depth(self) -> int:
        return self.downsample_l.bit_length() - 1


# `paper` mirrors the published hyperparameters; `desk` is the CPU-sized
# profile every test and acceptance run uses.
PROFILES = {
    "paper": TokenizerConfig(codebook_size_k=512, code_dim_d=512, train_steps=20000),
    "desk": TokenizerConfig(codebook_size_k=128, code_dim_d=64, train_steps=3000),
}


def profile_config(name: str, *, seed: int | None = None, train_steps: int | None = None) -> TokenizerConfig:
    if name not in PROFILES:
        raise ConfigError(f"unknown tokenizer profile {name!r}; choose from {sorted(PROFILES)}")
    cfg = PROFILES[name]
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if train_steps is not None:
        cfg = replace(cfg, train_steps=train_steps)
    return cfg
