"""Seed Structure (self-attention) and Seed Order (BiLSTM) discriminators."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn


@dataclass
class DiscriminatorConfig:
    L: int = 16
    d: int = 768
    ssd_layers: int = 2
    ssd_heads: int = 12
    ssd_dropout: float = 0.1
    sod_layers: int = 2
    sod_hidden: int = 768
    init_std: float = 0.08


def check_seed_shape(h: torch.Tensor, L: int, d: int) -> None:
    if h.dim() != 3 or h.shape[1:] != (L, d):
        raise ValueError(f"expected seeds of shape (B, {L}, {d}), got {tuple(h.shape)}")


class SeedStructureDiscriminator(nn.Module):
    """Bidirectional encoder over the raw seed; verdict from position 0."""

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.L, self.d = cfg.L, cfg.d
        # the encoder is permutation-equivariant without this; the seed is not re-embedded
        self.pos = nn.Parameter(torch.zeros(cfg.L, cfg.d))
        layer = nn.TransformerEncoderLayer(
            cfg.d, cfg.ssd_heads, dim_feedforward=4 * cfg.d, dropout=cfg.ssd_dropout,
            activation="gelu", batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, cfg.ssd_layers, enable_nested_tensor=False)
        self.head = nn.Linear(cfg.d, 1)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        check_seed_shape(h, self.L, self.d)
        feats = self.encoder(h + self.pos)
        return torch.sigmoid(self.head(feats[:, 0])).squeeze(-1)


class SeedOrderDiscriminator(nn.Module):
    """Two-layer BiLSTM; verdict from concatenated first and last position states."""

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.L, self.d = cfg.L, cfg.d
        self.lstm = nn.LSTM(cfg.d, cfg.sod_hidden, num_layers=cfg.sod_layers, bidirectional=True, batch_first=True)
        self.head = nn.Linear(4 * cfg.sod_hidden, 1)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        check_seed_shape(h, self.L, self.d)
        out, _ = self.lstm(h)
        feats = torch.cat([out[:, 0], out[:, -1]], dim=-1)
        return torch.sigmoid(self.head(feats)).squeeze(-1)


def _init_normal(module: nn.Module, std: float, rng: Optional[torch.Generator]) -> None:
    # LayerNorm gains/offsets keep their (1, 0) defaults
    norm_params = {id(p) for m in module.modules() if isinstance(m, nn.LayerNorm) for p in m.parameters()}
    with torch.no_grad():
        for p in module.parameters():
            if id(p) not in norm_params:
                p.normal_(0.0, std, generator=rng)


def init_discriminators(
    cfg: DiscriminatorConfig, rng: Optional[torch.Generator] = None
) -> tuple[SeedStructureDiscriminator, SeedOrderDiscriminator]:
    ssd, sod = SeedStructureDiscriminator(cfg), SeedOrderDiscriminator(cfg)
    _init_normal(ssd, cfg.init_std, rng)
    _init_normal(sod, cfg.init_std, rng)
    return ssd, sod


def ssd_forward(m: SeedStructureDiscriminator, h: torch.Tensor) -> torch.Tensor:
    return m(h)


def sod_forward(m: SeedOrderDiscriminator, h: torch.Tensor) -> torch.Tensor:
    return m(h)
