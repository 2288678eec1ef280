"""Stage functions behind the CLI: data preparation, pretraining, adversarial training, synthesis, evaluation.

Run directory layout::

    config.ini              snapshot written before any training step
    tokenizer.json          (+ tokenizer.meta.json)
    interpreter.pt          selected pretrained interpreter
    pretrain/last.pt        resumable pretraining state
    pretrain_history.json   per-epoch LM loss and validation BLEU-4
    checkpoints/epoch_*.pt  generator and discriminator states
    loss_log.jsonl          one row per d/g update
    epoch_metrics.json      per-epoch FBD / MSJ / DSR on the validation split
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import torch

from .config import RunConfig, write_snapshot
from .corpus import Dialogue, all_sentences, build_examples, load_corpus, load_examples, save_examples, seed_sentences
from .discriminators import init_discriminators
from .evaluation import EncoderFeatures, InterpreterFeatures, evaluate, metrics, write_report
from .generator import init_generator
from .interpreter import SeedInterpreter, load_gpt2_weights, load_interpreter, pretrain, save_interpreter
from .tokenizer import BPETokenizer, word_tokens
from .trainer import AdversarialTrainer, RunState, load_generator, random_noise_baseline, synthesize, to_text

logger = logging.getLogger(__name__)

CACHE_ENV = "TESGAN_CACHE_DIR"


def cache_dir() -> Optional[Path]:
    value = os.environ.get(CACHE_ENV)
    return Path(value) if value else None


@dataclass
class Data:
    tokenizer: BPETokenizer
    train: list[Dialogue]
    valid: list[Dialogue]
    test: list[Dialogue]


def read_lines(path: str | Path) -> list[str]:
    """One sentence per line; empty lines are kept (a synthesized sentence may be empty)."""
    return [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines()]


def write_lines(path: str | Path, lines: Sequence[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(s.replace("\n", " ") + "\n" for s in lines), encoding="utf-8")
    return path


# -- data -------------------------------------------------------------------------


def load_data(cfg: RunConfig) -> Data:
    d = cfg.data
    splits = {}
    for split in ("train", "valid", "test"):
        path = getattr(d, split)
        if not path:
            raise FileNotFoundError(f"[data] {split} path is not set")
        splits[split] = load_corpus(path, d.format)
    if not splits["train"]:
        raise ValueError(f"no multi-turn dialogues in {d.train}")
    return Data(tokenizer=_tokenizer(cfg, splits["train"]), **splits)


def _tokenizer(cfg: RunConfig, train: list[Dialogue]) -> BPETokenizer:
    saved = cfg.out_dir / "tokenizer.json"
    if saved.exists():
        return BPETokenizer.load(saved)
    if cfg.data.tokenizer == "gpt2":
        root = Path(cfg.data.gpt2_dir)
        tok = BPETokenizer.from_gpt2_files(root / "vocab.json", root / "merges.txt")
    elif cfg.data.tokenizer == "train":
        tok = BPETokenizer.train(all_sentences(train), vocab_size=cfg.data.tokenizer_vocab_size)
    else:
        raise ValueError(f"unknown tokenizer {cfg.data.tokenizer!r}; expected 'train' or 'gpt2'")
    tok.save(saved)
    return tok


def _adopt_tokenizer(src_dir: Path, out: Path) -> None:
    """Reuse the tokenizer saved beside an interpreter trained in another run directory."""
    if (out / "tokenizer.json").exists() or not (src_dir / "tokenizer.json").exists():
        return
    out.mkdir(parents=True, exist_ok=True)
    for name in ("tokenizer.json", "tokenizer.meta.json"):
        if (src_dir / name).exists():
            shutil.copyfile(src_dir / name, out / name)


def _examples(path: str, dialogues: list[Dialogue], cfg: RunConfig, tok: BPETokenizer):
    root = cache_dir()
    if root is None:
        return build_examples(dialogues, cfg.data.max_turns, cfg.data.L, tok, cfg.data.window_stride or None)
    source = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    settings = [source, cfg.data.format, cfg.data.max_turns, cfg.data.L, cfg.data.window_stride, tok.name, tok.vocab_size]
    key = hashlib.sha256(json.dumps(settings).encode()).hexdigest()[:16]
    cached = root / f"examples-{key}.npz"
    if cached.exists():
        return load_examples(cached)[0]
    examples = build_examples(dialogues, cfg.data.max_turns, cfg.data.L, tok, cfg.data.window_stride or None)
    root.mkdir(parents=True, exist_ok=True)
    save_examples(cached, examples, {"source": str(path), "L": cfg.data.L, "max_turns": cfg.data.max_turns})
    return examples


# -- pretraining --------------------------------------------------------------------


def run_pretrain(cfg: RunConfig, resume: bool = False) -> Path:
    out = cfg.out_dir
    write_snapshot(cfg, out)
    data = load_data(cfg)
    tok = data.tokenizer
    train = _examples(cfg.data.train, data.train, cfg, tok)
    valid = _examples(cfg.data.valid, data.valid, cfg, tok)
    if cfg.run.seed is not None:
        torch.manual_seed(cfg.run.seed)
    model = SeedInterpreter(cfg.interpreter_config(tok))
    if cfg.interpreter.init == "gpt2":
        load_gpt2_weights(model, cfg.data.gpt2_dir)
    elif cfg.interpreter.init != "scratch":
        raise ValueError(f"unknown interpreter init {cfg.interpreter.init!r}; expected 'scratch' or 'gpt2'")
    result = pretrain(train, valid, cfg.pretrain, model, tok.decode, run_dir=out / "pretrain", resume=resume)
    path = out / "interpreter.pt"
    save_interpreter(path, result.model, best_epoch=result.best_epoch, history=result.history)
    (out / "pretrain_history.json").write_text(json.dumps(result.history, indent=2), encoding="utf-8")
    logger.info("interpreter (best epoch %d) written to %s", result.best_epoch, path)
    return path


# -- adversarial training -------------------------------------------------------------


def feature_extractor(cfg: RunConfig, interp: SeedInterpreter, tok):
    if cfg.eval.fbd_features == "interpreter":
        return InterpreterFeatures(interp, tok, pooling="mean")
    return EncoderFeatures(cfg.eval.fbd_features, pooling=cfg.eval.fbd_pooling)


def run_train(cfg: RunConfig, interpreter_path: str | Path | None = None) -> RunState:
    out = cfg.out_dir
    interpreter_path = Path(interpreter_path or out / "interpreter.pt")
    if not interpreter_path.exists():
        raise FileNotFoundError(f"interpreter checkpoint not found: {interpreter_path} (run pretrain first)")
    write_snapshot(cfg, out)
    _adopt_tokenizer(interpreter_path.parent, out)
    data = load_data(cfg)
    tok = data.tokenizer
    interp = load_interpreter(interpreter_path)
    if interp.d != cfg.interpreter.d:
        raise ValueError(f"interpreter d={interp.d} but config says d={cfg.interpreter.d}")
    seeds = seed_sentences(data.train, cfg.data.L, tok)
    seed = cfg.run.seed if cfg.run.seed is not None else 0
    g = init_generator(cfg.generator, torch.Generator().manual_seed(seed))
    ssd, sod = init_discriminators(cfg.discriminator, torch.Generator().manual_seed(seed + 1))
    meta = {"interpreter": str(interpreter_path.resolve()), "tokenizer": str((out / "tokenizer.json").resolve())}
    trainer = AdversarialTrainer(interp, g, ssd, sod, cfg.train, out, meta)

    callback = None
    if cfg.eval.per_epoch:
        fx = feature_extractor(cfg, interp, tok)
        real = all_sentences(data.valid)
        train_tok = [word_tokens(s) for s in all_sentences(data.train)]
        n = cfg.eval.n_synth or len(all_sentences(data.test))

        def callback(epoch: int, tr: AdversarialTrainer) -> dict:
            syn = to_text(synthesize(interp, tr.g, n, cfg.decode, torch.Generator().manual_seed(seed + epoch)), tok)
            write_lines(out / "synth" / f"epoch_{epoch:03d}.txt", syn)
            syn_tok = [word_tokens(s) for s in syn]
            row = {"fbd": metrics.fbd(real, syn, fx) if len(syn) >= 2 else None}
            real_tok = [word_tokens(s) for s in real]
            for k in (2, 3, 4, 5):
                try:
                    row[f"msj{k}"] = metrics.msj(real_tok, syn_tok, k)
                except ValueError:
                    row[f"msj{k}"] = 0.0
            row["dsr"], row["r_syn"], row["r_unq"] = metrics.dsr(syn_tok, train_tok, cfg.metric_max_len)
            logger.info("epoch %d metrics %s", epoch, {k: round(v, 4) for k, v in row.items() if v is not None})
            return row

    state = trainer.fit(seeds, callback)
    (out / "epoch_losses.json").write_text(json.dumps(state.epoch_losses, indent=2), encoding="utf-8")
    (out / "epoch_metrics.json").write_text(json.dumps(state.metric_history, indent=2), encoding="utf-8")
    return state


# -- synthesis and evaluation -----------------------------------------------------------


def run_synth(
    checkpoint: str | Path,
    n: int,
    out: str | Path,
    cfg: RunConfig | None = None,
    baseline: str | None = None,
    seed: int = 0,
    interpreter_path: str | Path | None = None,
) -> list[str]:
    """Write n synthesized sentences, one per line.

    ``checkpoint`` is an adversarial checkpoint, or with ``baseline="random-noise"``
    an interpreter checkpoint.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    decode_cfg = cfg.decode if cfg is not None else None
    rng = torch.Generator().manual_seed(seed)
    checkpoint = Path(checkpoint)
    if baseline == "random-noise":
        interp_path = Path(interpreter_path or checkpoint)
        interp = load_interpreter(interp_path)
        tok = BPETokenizer.load(interp_path.parent / "tokenizer.json")
        L = cfg.data.L if cfg is not None else 16
        kwargs = {"decode_cfg": decode_cfg} if decode_cfg else {}
        ids = random_noise_baseline(interp, n, rng=rng, L=L, **kwargs)
    elif baseline is None:
        g, meta = load_generator(checkpoint)
        interp = load_interpreter(interpreter_path or meta["interpreter"])
        tok = BPETokenizer.load(meta["tokenizer"])
        kwargs = {"decode_cfg": decode_cfg} if decode_cfg else {}
        ids = synthesize(interp, g, n, rng=rng, **kwargs)
    else:
        raise ValueError(f"unknown baseline {baseline!r}; expected 'random-noise'")
    sents = to_text(ids, tok)
    write_lines(out, sents)
    return sents


def run_eval(
    real_path: str | Path,
    syn_path: str | Path,
    train_path: str | Path,
    out: str | Path,
    cfg: RunConfig | None = None,
    interpreter_path: str | Path | None = None,
    max_len: int | None = None,
):
    """Score a synthesized corpus; FBD and LM need an interpreter (or an encoder via [eval] fbd_features)."""
    real, syn, train = read_lines(real_path), read_lines(syn_path), read_lines(train_path)
    for name, corpus in (("real", real), ("synthesized", syn), ("train", train)):
        if not corpus:
            raise ValueError(f"{name} corpus is empty")
    fx = lm = tok = None
    if interpreter_path is not None:
        interp_path = Path(interpreter_path)
        lm = load_interpreter(interp_path)
        tok = BPETokenizer.load(interp_path.parent / "tokenizer.json")
        fx = feature_extractor(cfg, lm, tok) if cfg is not None else InterpreterFeatures(lm, tok)
    elif cfg is not None and cfg.eval.fbd_features != "interpreter":
        fx = EncoderFeatures(cfg.eval.fbd_features, pooling=cfg.eval.fbd_pooling)
    if max_len is None:
        max_len = cfg.metric_max_len if cfg is not None else 16
    report = evaluate(real, syn, train, max_len, fx=fx, lm=lm, tokenizer=tok)
    write_report(report, out)
    return report


def export_split_sentences(cfg: RunConfig, out_dir: str | Path) -> dict[str, Path]:
    """Flatten each split to one sentence per line (the evaluation input format)."""
    out_dir = Path(out_dir)
    paths = {}
    for split in ("train", "valid", "test"):
        paths[split] = write_lines(out_dir / f"{split}.sentences.txt", all_sentences(load_corpus(getattr(cfg.data, split), cfg.data.format)))
    return paths
