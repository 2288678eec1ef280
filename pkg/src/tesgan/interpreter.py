"""Seed interpretation model: a GPT-2 style decoder that reads continuous seeds.

The first sentence of every training example is embedded through the seed path
``sigmoid(W_emb(s) + W_pos(s))`` and later sentences through the ordinary
``W_emb + W_pos`` path, so the frozen model can decode generator output the
same way it decodes real first sentences.
"""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import MultiTurnExample, pad_grid

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass



def open_sigmoid(x: torch.Tensor) -> torch.Tensor:
    """Sigmoid kept strictly inside (0, 1) at the tensor's precision.

    float32 sigmoid rounds to exactly 1.0 above x ~ 16.6; those entries are
    moved to the largest representable value below 1.
    """
    one = torch.ones((), dtype=x.dtype, device=x.device)
    return torch.sigmoid(x).clamp(torch.finfo(x.dtype).tiny, torch.nextafter(one, torch.zeros_like(one)).item())

@dataclass
class InterpreterConfig:
    vocab_size: int = 50_260
    n_layer: int = 12
    d: int = 768
    n_head: int = 12
    max_positions: int = 1024
    dropout: float = 0.1
    layer_norm_eps: float = 1e-5
    # from-scratch models need O(1) embeddings or sigmoid(emb + pos) is ~0.5 everywhere
    embed_init_std: float = 1.0
    pad_id: int = 0
    cls_id: int = 1
    sep_id: int = 2
    tokenizer: str = "gpt2-bpe"


class _Attention(nn.Module):
    def __init__(self, cfg: InterpreterConfig):
        super().__init__()
        self.n_head = cfg.n_head
        self.c_attn = nn.Linear(cfg.d, 3 * cfg.d)
        self.c_proj = nn.Linear(cfg.d, cfg.d)
        self.dropout = cfg.dropout
        self.resid_drop = nn.Dropout(cfg.dropout)

    def forward(self, x):
        B, T, C = x.shape
        q, k, v = self.c_attn(x).split(C, dim=2)
        q, k, v = (t.view(B, T, self.n_head, C // self.n_head).transpose(1, 2) for t in (q, k, v))
        y = F.scaled_dot_product_attention(
            q, k, v, is_causal=True, dropout_p=self.dropout if self.training else 0.0
        )
        y = y.transpose(1, 2).reshape(B, T, C)
        return self.resid_drop(self.c_proj(y))


class _Block(nn.Module):
    def __init__(self, cfg: InterpreterConfig):
        super().__init__()
        self.ln_1 = nn.LayerNorm(cfg.d, eps=cfg.layer_norm_eps)
        self.attn = _Attention(cfg)
        self.ln_2 = nn.LayerNorm(cfg.d, eps=cfg.layer_norm_eps)
        self.c_fc = nn.Linear(cfg.d, 4 * cfg.d)
        self.c_proj = nn.Linear(4 * cfg.d, cfg.d)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x):
        x = x + self.attn(self.ln_1(x))
        h = F.gelu(self.c_fc(self.ln_2(x)), approximate="tanh")
        return x + self.drop(self.c_proj(h))


class SeedInterpreter(nn.Module):
    def __init__(self, cfg: InterpreterConfig):
        super().__init__()
        if cfg.d % cfg.n_head:
            raise ValueError("d must be divisible by n_head")
        self.cfg = cfg
        self.wte = nn.Embedding(cfg.vocab_size, cfg.d)
        self.wpe = nn.Embedding(cfg.max_positions, cfg.d)
        self.drop = nn.Dropout(cfg.dropout)
        self.h = nn.ModuleList(_Block(cfg) for _ in range(cfg.n_layer))
        self.ln_f = nn.LayerNorm(cfg.d, eps=cfg.layer_norm_eps)
        self.frozen = False
        self.apply(self._init_weights)
        for emb in (self.wte, self.wpe):
            nn.init.normal_(emb.weight, 0.0, cfg.embed_init_std)

    @staticmethod
    def _init_weights(module):
        if isinstance(module, nn.Linear):
            nn.init.normal_(module.weight, 0.0, 0.02)
            if module.bias is not None:
                nn.init.zeros_(module.bias)

    @property
    def d(self) -> int:
        return self.cfg.d

    def freeze(self) -> "SeedInterpreter":
        self.frozen = True
        self.eval()
        for p in self.parameters():
            p.requires_grad_(False)
        return self

    def train(self, mode: bool = True):
        # a frozen interpreter never re-enters training mode (dropout stays off)
        return super().train(mode and not self.frozen)

    # -- embeddings ---------------------------------------------------------

    def _check_ids(self, ids: torch.Tensor) -> None:
        if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= self.cfg.vocab_size):
            raise ValueError(f"token id out of range [0, {self.cfg.vocab_size})")

    def embed_tokens(self, ids: torch.Tensor, offset: int = 0) -> torch.Tensor:
        pos = torch.arange(offset, offset + ids.shape[-1], device=ids.device)
        return self.wte(ids) + self.wpe(pos)

    def embed_seed(self, ids: torch.Tensor) -> torch.Tensor:
        """Real seed: sigmoid of token plus positional embedding, shape (..., L, d)."""
        ids = torch.as_tensor(ids, dtype=torch.long, device=self.wte.weight.device)
        self._check_ids(ids)
        return open_sigmoid(self.embed_tokens(ids))

    # -- forward ------------------------------------------------------------

    def forward_hidden(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] > self.cfg.max_positions:
            raise ValueError(f"sequence of {x.shape[1]} exceeds {self.cfg.max_positions} positions")
        x = self.drop(x)
        for block in self.h:
            x = block(x)
        return self.ln_f(x)

    def lm_head(self, hidden: torch.Tensor) -> torch.Tensor:
        return hidden @ self.wte.weight.t()

    def logits(self, seed: torch.Tensor) -> torch.Tensor:
        """Per-position vocabulary scores for a (B, L, d) seed batch; differentiable in the seed."""
        if seed.dim() == 2:
            return self.lm_head(self.forward_hidden(seed.unsqueeze(0)))[0]
        return self.lm_head(self.forward_hidden(seed))

    def grid_inputs(self, grid: torch.Tensor, L: int) -> torch.Tensor:
        """Input states for a flattened multi-turn grid: seed path on the first L ids."""
        self._check_ids(grid)
        first = open_sigmoid(self.embed_tokens(grid[:, :L]))
        if grid.shape[1] == L:
            return first
        rest = self.embed_tokens(grid[:, L:], offset=L)
        return torch.cat([first, rest], dim=1)

    def lm_loss(self, grid: torch.Tensor, L: int, target_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Next-token cross entropy over a flattened grid.

        ``target_mask`` (same shape as ``grid``) marks positions scored as
        targets; by default every non-[PAD] position.
        """
        if grid.shape[1] <= L:
            raise ValueError("grid must be longer than L")
        if target_mask is None:
            target_mask = grid != self.cfg.pad_id
        x = self.grid_inputs(grid[:, :-1], L)
        logits = self.lm_head(self.forward_hidden(x))
        targets = grid[:, 1:].masked_fill(~target_mask[:, 1:], -100)
        return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1), ignore_index=-100)

    # -- decoding -----------------------------------------------------------

    @torch.no_grad()
    def decode(
        self,
        seed: torch.Tensor,
        max_new_tokens: int,
        strategy: str = "greedy",
        generator: Optional[torch.Generator] = None,
    ) -> list[list[int]] | list[int]:
        """Continue from seed prefixes until [SEP] or max_new_tokens; [SEP] is not returned."""
        if max_new_tokens <= 0:
            raise ValueError("max_new_tokens must be positive")
        if strategy not in ("greedy", "sample"):
            raise ValueError(f"unknown decoding strategy {strategy!r}")
        single = seed.dim() == 2
        x = seed.unsqueeze(0) if single else seed
        if x.shape[-1] != self.cfg.d:
            raise ValueError(f"seed width {x.shape[-1]} != model dim {self.cfg.d}")
        B, L, _ = x.shape
        out = torch.full((B, max_new_tokens), -1, dtype=torch.long, device=x.device)
        done = torch.zeros(B, dtype=torch.bool, device=x.device)
        for t in range(max_new_tokens):
            last = self.lm_head(self.forward_hidden(x)[:, -1])
            if strategy == "greedy":
                nxt = last.argmax(-1)
            else:
                probs = torch.softmax(last.double(), -1)
                nxt = torch.multinomial(probs, 1, generator=generator).squeeze(-1)
            nxt = nxt.masked_fill(done, self.cfg.sep_id)
            out[:, t] = torch.where(done, torch.full_like(nxt, -1), nxt)
            done |= nxt == self.cfg.sep_id
            if bool(done.all()) or t == max_new_tokens - 1:
                break
            x = torch.cat([x, self.embed_tokens(nxt[:, None], offset=L + t).to(x.dtype)], dim=1)
        seqs = []
        for row in out.tolist():
            toks = []
            for tok in row:
                if tok < 0 or tok == self.cfg.sep_id:
                    break
                toks.append(tok)
            seqs.append(toks)
        return seqs[0] if single else seqs

    @torch.no_grad()
    def sentence_cross_entropy(self, sentences: Sequence[Sequence[int]], batch_size: int = 256) -> list[float]:
        """Mean next-token cross entropy of [CLS] ids [SEP] read as a first sentence."""
        scores: list[float] = []
        for i in range(0, len(sentences), batch_size):
            chunk = [[self.cfg.cls_id, *s, self.cfg.sep_id] for s in sentences[i : i + batch_size]]
            T = max(len(c) for c in chunk)
            ids = torch.full((len(chunk), T), self.cfg.pad_id, dtype=torch.long, device=self.wte.weight.device)
            for j, c in enumerate(chunk):
                ids[j, : len(c)] = torch.as_tensor(c)
            logits = self.lm_head(self.forward_hidden(open_sigmoid(self.embed_tokens(ids[:, :-1]))))
            lengths = torch.tensor([len(c) - 1 for c in chunk], device=ids.device)
            mask = torch.arange(T - 1, device=ids.device)[None, :] < lengths[:, None]
            nll = F.cross_entropy(logits.transpose(1, 2), ids[:, 1:], reduction="none")
            scores.extend(((nll * mask).sum(1) / lengths).tolist())
        return scores


def checksum(module: nn.Module) -> str:
    import hashlib

    h = hashlib.sha256()
    for name, t in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


# -- pretraining --------------------------------------------------------------


@dataclass
class PretrainConfig:
    epochs: int = 20
    lr: float = 1e-3
    batch: int = 100
    max_turns: int = 4
    L: int = 16
    grad_clip: float = 1.0
    bleu_level: str = "sentence"
    bleu_max_examples: int = 500
    seed: Optional[int] = None


@dataclass
class PretrainResult:
    model: SeedInterpreter
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    step: int = 0


def _grids(examples: Sequence[MultiTurnExample], max_turns: int, pad_id: int) -> torch.Tensor:
    return torch.as_tensor(np.stack([pad_grid(e, max_turns, pad_id) for e in examples]))


def validation_bleu(model: SeedInterpreter, valid: Sequence[MultiTurnExample], cfg: PretrainConfig, detok) -> float:
    """BLEU-4 of greedy continuations (turn 2 given turn 1) against the reference turn 2."""
    from .evaluation.metrics import corpus_bleu, sentence_bleu
    from .tokenizer import word_tokens

    examples = [e for e in valid if e.n_turns >= 2][: cfg.bleu_max_examples]
    if not examples:
        return 0.0
    was_training = model.training
    model.eval()
    first = torch.as_tensor(np.stack([e.tokens[0] for e in examples]))
    hyps_ids = []
    for i in range(0, len(first), 256):
        hyps_ids += model.decode(model.embed_seed(first[i : i + 256]), cfg.L)
    model.train(was_training)
    refs = [word_tokens(detok(e.tokens[1])) for e in examples]
    hyps = [word_tokens(detok(h)) for h in hyps_ids]
    if cfg.bleu_level == "corpus":
        return corpus_bleu([[r] for r in refs], hyps, 4)
    return float(np.mean([sentence_bleu([r], h, 4) for r, h in zip(refs, hyps)]))


def pretrain(
    train: Sequence[MultiTurnExample],
    valid: Sequence[MultiTurnExample],
    cfg: PretrainConfig,
    model: SeedInterpreter | InterpreterConfig,
    detok: Callable[[Sequence[int]], str],
    run_dir: str | Path | None = None,
    resume: bool = False,
) -> PretrainResult:
    """Autoregressive multi-turn pretraining; keeps the checkpoint with best validation BLEU-4."""
    if not train or not valid:
        raise ValueError("pretraining needs non-empty train and valid sets")
    if isinstance(model, InterpreterConfig):
        model = SeedInterpreter(model)
    gen = torch.Generator().manual_seed(cfg.seed if cfg.seed is not None else int(torch.seed() % 2**31))
    if cfg.seed is not None:
        torch.manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    grids = _grids(train, cfg.max_turns, model.cfg.pad_id)
    result = PretrainResult(model)
    start_epoch, best_bleu, best_state = 1, -math.inf, None

    last_path = Path(run_dir) / "last.pt" if run_dir else None
    if resume and last_path is not None and last_path.exists():
        ck = load_checkpoint(last_path, kind="interpreter-train")
        model.load_state_dict(ck["state_dict"])
        opt.load_state_dict(ck["optimizer"])
        gen.set_state(ck["rng"])
        result.history, result.step, result.best_epoch = ck["history"], ck["step"], ck["best_epoch"]
        best_bleu, best_state = ck["best_bleu"], ck["best_state"]
        start_epoch = ck["epoch"] + 1
        logger.info("resuming pretraining at epoch %d (step %d)", start_epoch, result.step)
    else:
        bleu0 = validation_bleu(model, valid, cfg, detok)
        result.history.append({"epoch": 0, "loss": float("nan"), "bleu4": bleu0, "step": 0})
        best_bleu, best_state = bleu0, copy.deepcopy(model.state_dict())

    for epoch in range(start_epoch, cfg.epochs + 1):
        model.train()
        perm = torch.randperm(len(grids), generator=gen)
        losses = []
        for i in range(0, len(perm), cfg.batch):
            batch = grids[perm[i : i + cfg.batch]]
            loss = model.lm_loss(batch, cfg.L)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite LM loss at epoch {epoch}, step {result.step}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            if cfg.grad_clip:
                nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            opt.step()
            result.step += 1
            losses.append(loss.item())
        bleu = validation_bleu(model, valid, cfg, detok)
        result.history.append({"epoch": epoch, "loss": float(np.mean(losses)), "bleu4": bleu, "step": result.step})
        logger.info("pretrain epoch %d loss %.4f bleu4 %.4f", epoch, np.mean(losses), bleu)
        if bleu > best_bleu:
            best_bleu, best_state, result.best_epoch = bleu, copy.deepcopy(model.state_dict()), epoch
        if last_path is not None:
            save_checkpoint(
                last_path,
                kind="interpreter-train",
                meta=interpreter_meta(model),
                state_dict=model.state_dict(),
                optimizer=opt.state_dict(),
                rng=gen.get_state(),
                history=result.history,
                step=result.step,
                epoch=epoch,
                best_epoch=result.best_epoch,
                best_bleu=best_bleu,
                best_state=best_state,
            )

    model.load_state_dict(best_state)
    model.eval()
    return result


# -- checkpoints ----------------------------------------------------------------


def interpreter_meta(model: SeedInterpreter) -> dict:
    return {"n_layer": model.cfg.n_layer, "d": model.cfg.d, "vocab_size": model.cfg.vocab_size, "tokenizer": model.cfg.tokenizer}


def save_interpreter(path: str | Path, model: SeedInterpreter, **extra) -> None:
    save_checkpoint(path, kind="interpreter", meta=interpreter_meta(model), config=asdict(model.cfg), state_dict=model.state_dict(), **extra)


def load_interpreter(path: str | Path, freeze: bool = True) -> SeedInterpreter:
    ck = load_checkpoint(path, kind="interpreter")
    model = SeedInterpreter(InterpreterConfig(**ck["config"]))
    model.load_state_dict(ck["state_dict"])
    return model.freeze() if freeze else model.eval()


def load_gpt2_weights(model: SeedInterpreter, hf_dir: str | Path) -> SeedInterpreter:
    """Copy weights from a local Hugging Face GPT-2 checkpoint; extra vocab rows keep their init."""
    from transformers import GPT2LMHeadModel

    src = GPT2LMHeadModel.from_pretrained(str(hf_dir)).state_dict()
    sd = model.state_dict()
    n_vocab = src["transformer.wte.weight"].shape[0]
    if src["transformer.wte.weight"].shape[1] != model.cfg.d:
        raise ValueError("GPT-2 hidden size does not match interpreter d")
    with torch.no_grad():
        sd["wte.weight"][:n_vocab] = src["transformer.wte.weight"]
        n_pos = min(model.cfg.max_positions, src["transformer.wpe.weight"].shape[0])
        sd["wpe.weight"][:n_pos] = src["transformer.wpe.weight"][:n_pos]
        sd["ln_f.weight"].copy_(src["transformer.ln_f.weight"])
        sd["ln_f.bias"].copy_(src["transformer.ln_f.bias"])
        for i in range(model.cfg.n_layer):
            p = f"transformer.h.{i}."
            pairs = {
                "ln_1": "ln_1", "ln_2": "ln_2",
                "attn.c_attn": "attn.c_attn", "attn.c_proj": "attn.c_proj",
                "c_fc": "mlp.c_fc", "c_proj": "mlp.c_proj",
            }
            for ours, theirs in pairs.items():
                w = src[p + theirs + ".weight"]
                # HF GPT-2 stores Conv1D weights as (in, out)
                sd[f"h.{i}.{ours}.weight"].copy_(w if ours.startswith("ln") else w.t())
                sd[f"h.{i}.{ours}.bias"].copy_(src[p + theirs + ".bias"])
    model.load_state_dict(sd)
    return model
