from __future__ import annotations

from collections import defaultdict

import pytest
import torch

from tesgan.corpus import all_sentences
from tesgan.interpreter import InterpreterConfig, SeedInterpreter
from tesgan.tokenizer import BPETokenizer
from tesgan.toydata import toy_dialogues

CRITERIA = {
    1: "metric oracle suite",
    2: "loss identity suite",
    3: "gradient suite",
    4: "schedule suite",
    5: "shape/invariant suite",
    6: "miniature end-to-end",
    7: "soft FBD trend (informational, non-gating)",
}

_outcomes: dict[int, list[str]] = defaultdict(list)
# non-gating criteria report what was observed instead of a test outcome
_informational: dict[int, tuple[bool, str]] = {}


def record_informational(n: int, holds: bool, detail: str) -> None:
    _informational[n] = (holds, detail)


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        outcome = "passed" if call.excinfo is None else ("skipped" if call.excinfo.errisinstance(pytest.skip.Exception) else "failed")
        _outcomes[marker.args[0]].append(outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        results = _outcomes.get(n)
        if not results:
            continue
        if n in _informational and all(r == "passed" for r in results):
            holds, detail = _informational[n]
            terminalreporter.write_line(f"criterion {n}: {'PASS' if holds else 'FAIL'}  {CRITERIA[n]}: {detail}")
            continue
        status = "PASS" if all(r == "passed" for r in results) else ("SKIP" if all(r == "skipped" for r in results) else "FAIL")
        terminalreporter.write_line(f"criterion {n}: {status}  {CRITERIA[n]} ({results.count('passed')}/{len(results)} checks)")


@pytest.fixture(scope="session")
def toy_corpus():
    return toy_dialogues(100, seed=0)


@pytest.fixture(scope="session")
def toy_tokenizer(toy_corpus):
    return BPETokenizer.train(all_sentences(toy_corpus), vocab_size=400)


def make_interpreter(tok, d=32, n_layer=2, n_head=2, seed=0, dropout=0.0, **kw) -> SeedInterpreter:
    torch.manual_seed(seed)
    cfg = InterpreterConfig(
        vocab_size=tok.vocab_size, n_layer=n_layer, d=d, n_head=n_head, max_positions=128, dropout=dropout,
        pad_id=tok.pad_id, cls_id=tok.cls_id, sep_id=tok.sep_id, tokenizer=tok.name, **kw,
    )
    return SeedInterpreter(cfg)


@pytest.fixture
def tiny_interp(toy_tokenizer):
    return make_interpreter(toy_tokenizer).freeze()


@pytest.fixture
def tiny_interp_double(toy_tokenizer):
    return make_interpreter(toy_tokenizer).double().freeze()


def make_trainer(interp, seed=0, run_dir=None, **train_kw):
    """Small generator and discriminators sized for ``interp`` (L=16)."""
    from tesgan.discriminators import DiscriminatorConfig, init_discriminators
    from tesgan.generator import GeneratorConfig, init_generator
    from tesgan.trainer import AdversarialTrainer, TrainConfig

    d = interp.d
    mode = train_kw.get("mode", "tesgan")
    g = init_generator(GeneratorConfig(L=16, d=d, noise_channels=16, hidden_filters=8, upsample=8, mode=mode), torch.Generator().manual_seed(seed))
    ssd, sod = init_discriminators(DiscriminatorConfig(L=16, d=d, ssd_heads=2, sod_hidden=8), torch.Generator().manual_seed(seed + 1))
    cfg = TrainConfig(**{"epochs": 2, "batch": 4, "seed": seed, **train_kw})
    return AdversarialTrainer(interp, g, ssd, sod, cfg, run_dir=run_dir)


@pytest.fixture
def toy_seeds(toy_corpus, toy_tokenizer):
    from tesgan.corpus import seed_sentences

    return seed_sentences(toy_corpus[:10], 16, toy_tokenizer)


@pytest.fixture(scope="session")
def trained_interp(toy_corpus, toy_tokenizer):
    """Small interpreter pretrained on the toy corpus through the first-row layout."""
    from tesgan.corpus import build_examples
    from tesgan.interpreter import PretrainConfig, pretrain

    examples = build_examples(toy_corpus, 4, 16, toy_tokenizer, stride=1)
    cfg = PretrainConfig(epochs=6, lr=3e-3, batch=16, L=16, seed=0, bleu_max_examples=50)
    return pretrain(examples, examples[:50], cfg, make_interpreter(toy_tokenizer, d=64), toy_tokenizer.decode).model.freeze()
