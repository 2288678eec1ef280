"""Adversarial-phase losses: BCE for both discriminators, SDP and SFP for the generator."""
from __future__ import annotations

from dataclasses import dataclass, fields

import torch
import torch.nn.functional as F

EPS = 1e-7


@dataclass
class LossBreakdown:
    bce_ssd: torch.Tensor
    bce_sod: torch.Tensor
    sdp: torch.Tensor
    sfp: torch.Tensor
    total: torch.Tensor

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def as_floats(self) -> dict[str, float]:
        return {k: float(torch.as_tensor(v).detach()) for k, v in self.items()}

    def is_finite(self) -> bool:
        return all(bool(torch.isfinite(torch.as_tensor(v))) for _, v in self.items())


@dataclass(frozen=True)
class LossSwitches:
    """Ablation switches; a disabled term contributes zero to the total."""

    ssd: bool = True
    sod: bool = True
    sdp: bool = True
    sfp: bool = True


def bce(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean binary cross entropy with predictions clamped to [EPS, 1 - EPS]."""
    pred = torch.as_tensor(pred)
    target = torch.as_tensor(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ValueError(f"pred {tuple(pred.shape)} and target {tuple(target.shape)} differ")
    p = pred.clamp(EPS, 1 - EPS)
    return -(target * torch.log(p) + (1 - target) * torch.log1p(-p)).mean()


def kl_from_logits(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    """KL(softmax(real) || softmax(fake)) over the last axis, averaged over all other axes."""
    log_p = F.log_softmax(real_logits, dim=-1)
    log_q = F.log_softmax(fake_logits, dim=-1)
    return (log_p.exp() * (log_p - log_q)).sum(-1).mean()


def sdp_loss(interp, h_real: torch.Tensor, h_fake: torch.Tensor) -> torch.Tensor:
    if h_real.shape != h_fake.shape:
        raise ValueError("real and fake seed batches must have the same shape")
    with torch.no_grad():
        real_logits = interp.logits(h_real)
    return kl_from_logits(real_logits, interp.logits(h_fake))


def sfp_loss(h_real: torch.Tensor, h_fake: torch.Tensor, mean_axis: str = "position") -> torch.Tensor:
    """||mu_r - mu_f||^2 (batch mean) + mean |H_real - H_fake|.

    ``mean_axis="position"`` averages over d giving an L-vector per seed;
    ``"global"`` averages each seed to a scalar.
    """
    if h_real.shape != h_fake.shape:
        raise ValueError("real and fake seed batches must have the same shape")
    h_real = h_real.detach()
    if mean_axis == "position":
        mu_r, mu_f = h_real.mean(-1), h_fake.mean(-1)
    elif mean_axis == "global":
        mu_r, mu_f = h_real.mean((-2, -1))[..., None], h_fake.mean((-2, -1))[..., None]
    else:
        raise ValueError(f"unknown mean_axis {mean_axis!r}")
    return ((mu_r - mu_f) ** 2).sum(-1).mean() + (h_real - h_fake).abs().mean()


def d_step_loss(real_ssd, real_sod, fake_ssd, fake_sod, switches: LossSwitches = LossSwitches()) -> LossBreakdown:
    ones, zeros = torch.ones_like(real_ssd), torch.zeros_like(fake_ssd)
    l_ssd = bce(real_ssd, ones) + bce(fake_ssd, zeros)
    l_sod = bce(real_sod, torch.ones_like(real_sod)) + bce(fake_sod, torch.zeros_like(fake_sod))
    zero = torch.zeros((), dtype=l_ssd.dtype)
    total = (l_ssd if switches.ssd else zero) + (l_sod if switches.sod else zero)
    return LossBreakdown(l_ssd, l_sod, zero, zero, total)


def g_step_loss(fake_ssd, fake_sod, sdp, sfp, switches: LossSwitches = LossSwitches()) -> LossBreakdown:
    """Non-saturating generator objective: fakes pushed toward label 1, plus SDP and SFP."""
    l_ssd = bce(fake_ssd, torch.ones_like(fake_ssd))
    l_sod = bce(fake_sod, torch.ones_like(fake_sod))
    sdp, sfp = torch.as_tensor(sdp, dtype=l_ssd.dtype), torch.as_tensor(sfp, dtype=l_ssd.dtype)
    terms = [(switches.ssd, l_ssd), (switches.sod, l_sod), (switches.sdp, sdp), (switches.sfp, sfp)]
    total = sum((t for on, t in terms if on), torch.zeros((), dtype=l_ssd.dtype))
    return LossBreakdown(l_ssd, l_sod, sdp, sfp, total)
