"""Noise-to-seed generator built from two 1-D transposed convolutions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from .interpreter import open_sigmoid

ACTIVATIONS = ("sigmoid", "tanh", "none")
MODES = ("tesgan", "p-tesgan")


@dataclass
class GeneratorConfig:
    L: int = 16
    d: int = 768
    noise_channels: int = 256
    hidden_filters: int = 128
    upsample: int = 8
    slope: float = 0.5
    activation: str = "sigmoid"
    init_std: float = 0.08
    mode: str = "tesgan"
    sigma: float = 0.1


@dataclass(frozen=True)
class NoiseSpec:
    shape: tuple[int, ...] = (256, 1)
    low: float = -10.0
    high: float = 10.0


def sample_noise(spec: NoiseSpec, batch: int, rng: Optional[torch.Generator] = None) -> torch.Tensor:
    """Uniform noise in [low, high) of shape (batch, *spec.shape)."""
    if batch < 1:
        raise ValueError("batch must be >= 1")
    u = torch.rand((batch, *spec.shape), generator=rng)
    return u * (spec.high - spec.low) + spec.low


class SeedGenerator(nn.Module):
    """(B, C, 1) noise -> (B, L, d) seeds.

    Layer one widens the single noise position to d/upsample positions with
    ``hidden_filters`` channels; layer two emits L channels (one per seed
    position), each upsampled to length d. No normalisation layers.
    """

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        if cfg.L <= 0 or cfg.d <= 0:
            raise ValueError("L and d must be positive")
        if cfg.d % cfg.upsample:
            raise ValueError(f"d={cfg.d} must be divisible by upsample={cfg.upsample}")
        if cfg.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if cfg.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.cfg = cfg
        self.noise_spec = NoiseSpec((cfg.noise_channels, 1))
        self.up1 = nn.ConvTranspose1d(cfg.noise_channels, cfg.hidden_filters, kernel_size=cfg.d // cfg.upsample)
        self.act = nn.LeakyReLU(cfg.slope)
        self.up2 = nn.ConvTranspose1d(cfg.hidden_filters, cfg.L, kernel_size=cfg.upsample, stride=cfg.upsample)

    def forward(self, noise: torch.Tensor) -> torch.Tensor:
        if tuple(noise.shape[1:]) != self.noise_spec.shape:
            raise ValueError(f"noise shape {tuple(noise.shape[1:])} != expected {self.noise_spec.shape}")
        h = self.up2(self.act(self.up1(noise)))
        if self.cfg.activation == "sigmoid":
            return open_sigmoid(h)
        if self.cfg.activation == "tanh":
            return torch.tanh(h)
        return h

    def sample(self, batch: int, rng: Optional[torch.Generator] = None) -> torch.Tensor:
        noise = sample_noise(self.noise_spec, batch, rng).to(self.up1.weight.device, self.up1.weight.dtype)
        return self(noise)


def init_generator(cfg: GeneratorConfig, rng: Optional[torch.Generator] = None) -> SeedGenerator:
    g = SeedGenerator(cfg)
    with torch.no_grad():
        for p in g.parameters():
            p.normal_(0.0, cfg.init_std, generator=rng)
    return g


def generate(g: SeedGenerator, noise: torch.Tensor) -> torch.Tensor:
    return g(noise)


def perturb(h: torch.Tensor, sigma: float, rng: Optional[torch.Generator] = None) -> torch.Tensor:
    """h + z with z ~ N(0, sigma^2); output may leave (0, 1)."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return h
    z = torch.randn(h.shape, generator=rng, dtype=h.dtype).to(h.device)
    return h + sigma * z
