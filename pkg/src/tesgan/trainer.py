"""Adversarial training schedule and unconditional synthesis."""
from __future__ import annotations

import contextlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import torch
from torch import nn

from .checkpoint import load_checkpoint, save_checkpoint
from .discriminators import DiscriminatorConfig, SeedOrderDiscriminator, SeedStructureDiscriminator
from .generator import GeneratorConfig, SeedGenerator, perturb
from .interpreter import SeedInterpreter, TrainingDiverged, checksum
from .objectives import LossBreakdown, LossSwitches, d_step_loss, g_step_loss, sdp_loss, sfp_loss

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 20
    batch: int = 128
    lr_generator: float = 2e-4
    lr_ssd: float = 5e-4
    lr_sod: float = 1e-3
    g_updates_per_step: int = 2
    mode: str = "tesgan"
    sigma: float = 0.1
    use_ssd: bool = True
    use_sod: bool = True
    use_sdp: bool = True
    use_sfp: bool = True
    sfp_mean_axis: str = "position"
    seed: Optional[int] = None

    def __post_init__(self):
        if min(self.lr_generator, self.lr_ssd, self.lr_sod) <= 0:
            raise ValueError("learning rates must be positive")
        if self.g_updates_per_step < 1:
            raise ValueError("g_updates_per_step must be >= 1")
        if self.mode not in ("tesgan", "p-tesgan"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def switches(self) -> LossSwitches:
        return LossSwitches(self.use_ssd, self.use_sod, self.use_sdp, self.use_sfp)


@dataclass
class DecodeConfig:
    max_new_tokens: int = 16
    strategy: str = "greedy"
    batch: int = 256


@dataclass
class RunState:
    epoch: int = 0
    d_updates: int = 0
    g_updates: int = 0
    loss_log: list[dict] = field(default_factory=list)
    epoch_losses: list[dict] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)
    metric_history: list[dict] = field(default_factory=list)
    interpreter_checksum: str = ""


@contextlib.contextmanager
def frozen(*modules: nn.Module):
    """Temporarily switch off requires_grad so a step cannot touch these parameters."""
    params = [p for m in modules for p in m.parameters()]
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad_(False)
    try:
        yield
    finally:
        for p, f in zip(params, flags):
            p.requires_grad_(f)


class AdversarialTrainer:
    """Runs d-steps on odd epochs and g_updates_per_step generator updates per batch every epoch."""

    def __init__(
        self,
        interp: SeedInterpreter,
        g: SeedGenerator,
        ssd: SeedStructureDiscriminator,
        sod: SeedOrderDiscriminator,
        cfg: TrainConfig,
        run_dir: str | Path | None = None,
        meta: dict | None = None,
    ):
        if not interp.frozen:
            raise ValueError("interpreter must be frozen before adversarial training")
        self.interp, self.g, self.ssd, self.sod, self.cfg = interp, g, ssd, sod, cfg
        self.run_dir = Path(run_dir) if run_dir else None
        self.meta = meta or {}
        self.rng = torch.Generator()
        self.rng.manual_seed(cfg.seed if cfg.seed is not None else int(torch.seed() % 2**31))
        if cfg.seed is not None:
            torch.manual_seed(cfg.seed)
        self.opt_g = torch.optim.Adam(g.parameters(), lr=cfg.lr_generator)
        self.opt_ssd = torch.optim.Adam(ssd.parameters(), lr=cfg.lr_ssd)
        self.opt_sod = torch.optim.Adam(sod.parameters(), lr=cfg.lr_sod)
        self.state = RunState(interpreter_checksum=checksum(interp))
        self._log_file = None

    # -- single steps -------------------------------------------------------

    def _fake(self, n: int) -> torch.Tensor:
        h = self.g.sample(n, self.rng)
        if self.cfg.mode == "p-tesgan":
            h = perturb(h, self.cfg.sigma, self.rng)
        return h

    def d_step(self, real_ids: torch.Tensor) -> LossBreakdown:
        sw = self.cfg.switches
        with torch.no_grad():
            real = self.interp.embed_seed(real_ids)
            fake = self._fake(len(real_ids))
        self.opt_ssd.zero_grad(set_to_none=True)
        self.opt_sod.zero_grad(set_to_none=True)
        zeros = torch.full((len(real_ids),), 0.5)
        r_ssd, f_ssd = (self.ssd(real), self.ssd(fake)) if sw.ssd else (zeros, zeros)
        r_sod, f_sod = (self.sod(real), self.sod(fake)) if sw.sod else (zeros, zeros)
        loss = d_step_loss(r_ssd, r_sod, f_ssd, f_sod, sw)
        self._check(loss, "d")
        # with both discriminators ablated there is nothing to update
        if loss.total.requires_grad:
            loss.total.backward()
        if sw.ssd:
            self.opt_ssd.step()
        if sw.sod:
            self.opt_sod.step()
        self.state.d_updates += 1
        return loss

    def g_step(self, real_ids: torch.Tensor) -> LossBreakdown:
        sw = self.cfg.switches
        with torch.no_grad():
            real = self.interp.embed_seed(real_ids)
        with frozen(self.ssd, self.sod):
            self.opt_g.zero_grad(set_to_none=True)
            fake = self._fake(len(real_ids))
            half = torch.full((len(real_ids),), 0.5)
            v_ssd = self.ssd(fake) if sw.ssd else half
            v_sod = self.sod(fake) if sw.sod else half
            sdp = sdp_loss(self.interp, real, fake) if sw.sdp else torch.zeros(())
            sfp = sfp_loss(real, fake, self.cfg.sfp_mean_axis) if sw.sfp else torch.zeros(())
            loss = g_step_loss(v_ssd, v_sod, sdp, sfp, sw)
            self._check(loss, "g")
            loss.total.backward()
            self.opt_g.step()
        self.state.g_updates += 1
        return loss

    def _check(self, loss: LossBreakdown, phase: str) -> None:
        if not loss.is_finite():
            last = self.state.checkpoints[-1] if self.state.checkpoints else None
            raise TrainingDiverged(
                f"non-finite {phase}-step loss at epoch {self.state.epoch}: {loss.as_floats()}; "
                f"last good checkpoint: {last}"
            )

    # -- epochs -------------------------------------------------------------

    def _log(self, row: dict) -> None:
        self.state.loss_log.append(row)
        if self._log_file is not None:
            self._log_file.write(json.dumps(row) + "\n")

    def run_epoch(self, seeds: torch.Tensor) -> dict:
        self.state.epoch += 1
        epoch = self.state.epoch
        self.g.train(), self.ssd.train(), self.sod.train()
        perm = torch.randperm(len(seeds), generator=self.rng)
        batches = [seeds[perm[i : i + self.cfg.batch]] for i in range(0, len(perm), self.cfg.batch)]
        sums: dict[str, list[dict]] = {"d": [], "g": []}
        if epoch % 2 == 1:
            for step, b in enumerate(batches):
                loss = self.d_step(b).as_floats()
                sums["d"].append(loss)
                self._log({"epoch": epoch, "phase": "d", "step": step, **loss})
        for step, b in enumerate(batches):
            for k in range(self.cfg.g_updates_per_step):
                loss = self.g_step(b).as_floats()
                sums["g"].append(loss)
                self._log({"epoch": epoch, "phase": "g", "step": step, "update": k, **loss})
        summary = {"epoch": epoch}
        for phase, rows in sums.items():
            for key in (rows[0] if rows else {}):
                summary[f"{phase}_{key}"] = float(np.mean([r[key] for r in rows]))
        self.state.epoch_losses.append(summary)
        if self.run_dir is not None:
            path = self.save(self.run_dir / "checkpoints" / f"epoch_{epoch:03d}.pt")
            self.state.checkpoints.append(str(path))
        logger.info("epoch %d %s", epoch, {k: round(v, 4) for k, v in summary.items() if k != "epoch"})
        return summary

    def fit(self, seeds, epoch_callback: Callable[[int, "AdversarialTrainer"], dict] | None = None) -> RunState:
        seeds = torch.as_tensor(np.asarray(seeds), dtype=torch.long)
        if len(seeds) == 0:
            raise ValueError("no seed sentences")
        if self.run_dir is not None:
            self.run_dir.mkdir(parents=True, exist_ok=True)
            self._log_file = open(self.run_dir / "loss_log.jsonl", "a" if self.state.epoch else "w", encoding="utf-8")
        try:
            for _ in range(self.cfg.epochs):
                self.run_epoch(seeds)
                if epoch_callback is not None:
                    metrics = epoch_callback(self.state.epoch, self)
                    if metrics:
                        self.state.metric_history.append({"epoch": self.state.epoch, **metrics})
                if checksum(self.interp) != self.state.interpreter_checksum:
                    raise RuntimeError("interpreter parameters changed during adversarial training")
        finally:
            if self._log_file is not None:
                self._log_file.close()
                self._log_file = None
        return self.state

    # -- checkpoints ----------------------------------------------------------

    def save(self, path: str | Path) -> Path:
        return save_checkpoint(
            path,
            kind="adversarial",
            meta={
                **self.meta,
                "mode": self.cfg.mode,
                "activation": self.g.cfg.activation,
                "sigma": self.cfg.sigma,
                "epoch": self.state.epoch,
            },
            generator_config=asdict(self.g.cfg),
            train_config=asdict(self.cfg),
            generator=self.g.state_dict(),
            ssd=self.ssd.state_dict(),
            sod=self.sod.state_dict(),
            opt_g=self.opt_g.state_dict(),
            opt_ssd=self.opt_ssd.state_dict(),
            opt_sod=self.opt_sod.state_dict(),
            counters={"d_updates": self.state.d_updates, "g_updates": self.state.g_updates},
        )


def train_adversarial(
    interp: SeedInterpreter,
    g: SeedGenerator,
    ssd: SeedStructureDiscriminator,
    sod: SeedOrderDiscriminator,
    seeds,
    cfg: TrainConfig,
    run_dir: str | Path | None = None,
    epoch_callback=None,
    meta: dict | None = None,
) -> RunState:
    return AdversarialTrainer(interp, g, ssd, sod, cfg, run_dir, meta).fit(seeds, epoch_callback)


def load_generator(path: str | Path) -> tuple[SeedGenerator, dict]:
    ck = load_checkpoint(path, kind="adversarial")
    g = SeedGenerator(GeneratorConfig(**ck["generator_config"]))
    g.load_state_dict(ck["generator"])
    g.eval()
    for p in g.parameters():
        p.requires_grad_(False)
    return g, ck["meta"]


# -- synthesis ------------------------------------------------------------------


def _decode_batches(interp: SeedInterpreter, make_seeds, n: int, cfg: DecodeConfig, rng) -> list[list[int]]:
    out: list[list[int]] = []
    while len(out) < n:
        k = min(cfg.batch, n - len(out))
        with torch.no_grad():
            seeds = make_seeds(k)
        out.extend(interp.decode(seeds, cfg.max_new_tokens, cfg.strategy, generator=rng))
    return out


def synthesize(
    interp: SeedInterpreter,
    g: SeedGenerator,
    n: int,
    decode_cfg: DecodeConfig = DecodeConfig(),
    rng: Optional[torch.Generator] = None,
) -> list[list[int]]:
    """n token sequences, each decoded from an independent noise draw."""
    if n <= 0:
        raise ValueError("n must be positive")
    g.eval()
    return _decode_batches(interp, lambda k: g.sample(k, rng), n, decode_cfg, rng)


def random_noise_baseline(
    interp: SeedInterpreter,
    n: int,
    decode_cfg: DecodeConfig = DecodeConfig(),
    rng: Optional[torch.Generator] = None,
    L: int = 16,
) -> list[list[int]]:
    """Decode standard-normal L x d matrices fed directly as seeds."""
    if n <= 0:
        raise ValueError("n must be positive")
    return _decode_batches(interp, lambda k: torch.randn((k, L, interp.d), generator=rng), n, decode_cfg, rng)


def to_text(seqs: Sequence[Sequence[int]], tokenizer) -> list[str]:
    return [tokenizer.decode(s).replace("\n", " ").strip() for s in seqs]
