"""Multi-turn corpus loading and the [CLS]/[SEP]/[PAD] sentence layout."""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .tokenizer import Tokenizer

logger = logging.getLogger(__name__)

FORMATS = ("dailydialog", "imdb", "plain-multiturn")
CACHE_VERSION = 1

_EOU = "__eou__"
_BR_RE = re.compile(r"<br\s*/?>", re.IGNORECASE)
_SENT_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


class CorpusError(ValueError):
    pass


class CorpusParseError(CorpusError):
    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


@dataclass(frozen=True)
class Dialogue:
    sentences: tuple[str, ...]

    def __post_init__(self):
        if len(self.sentences) < 2:
            raise CorpusError("a dialogue needs at least 2 turns")


@dataclass(frozen=True)
class MultiTurnExample:
    """Token grid of shape (n_turns, L); row 0 starts with [CLS]."""

    tokens: np.ndarray

    @property
    def n_turns(self) -> int:
        return self.tokens.shape[0]

    @property
    def L(self) -> int:
        return self.tokens.shape[1]


def split_sentences(text: str) -> list[str]:
    text = _BR_RE.sub(" ", text)
    return [s.strip() for s in _SENT_SPLIT_RE.split(text) if s.strip()]


def _read_lines(path: Path) -> list[str]:
    raw = path.read_bytes()
    lines = raw.split(b"\n")
    out = []
    for i, line in enumerate(lines, 1):
        try:
            out.append(line.decode("utf-8").rstrip("\r"))
        except UnicodeDecodeError as exc:
            raise CorpusParseError(path, i, f"invalid UTF-8 ({exc.reason})") from None
    return out


def _parse_dailydialog(path: Path) -> list[list[str]]:
    records = []
    for i, line in enumerate(_read_lines(path), 1):
        if not line.strip():
            continue
        if _EOU not in line:
            raise CorpusParseError(path, i, f"record has no {_EOU} turn delimiter")
        turns = [t.strip() for t in line.split(_EOU)]
        records.append([t for t in turns if t])
    return records


def _parse_plain(path: Path) -> list[list[str]]:
    records, block = [], []
    for line in _read_lines(path):
        if line.strip():
            block.append(line.strip())
        elif block:
            records.append(block)
            block = []
    if block:
        records.append(block)
    return records


def _parse_imdb(path: Path) -> list[list[str]]:
    if path.is_dir():
        texts = [p.read_text(encoding="utf-8") for p in sorted(path.rglob("*.txt"))]
    else:
        texts = [line for line in _read_lines(path) if line.strip()]
    return [split_sentences(t) for t in texts]


_PARSERS = {
    "dailydialog": _parse_dailydialog,
    "imdb": _parse_imdb,
    "plain-multiturn": _parse_plain,
}


def load_corpus(path: str | Path, format: str) -> list[Dialogue]:
    """Read a dialogue corpus, dropping single-turn records."""
    if format not in _PARSERS:
        raise CorpusError(f"unknown corpus format {format!r}; expected one of {FORMATS}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"corpus not found: {path}")
    records = _PARSERS[format](path)
    dialogues = [Dialogue(tuple(r)) for r in records if len(r) >= 2]
    dropped = len(records) - len(dialogues)
    if dropped:
        logger.info("dropped %d single-turn records from %s", dropped, path)
    return dialogues


def layout_sentence(ids: Sequence[int], L: int, tokenizer: Tokenizer, first: bool) -> np.ndarray:
    """One row: optional [CLS], tokens truncated to fit, one [SEP], then [PAD]."""
    body = list(ids)[: L - 2]
    row = ([tokenizer.cls_id] if first else []) + body + [tokenizer.sep_id]
    row += [tokenizer.pad_id] * (L - len(row))
    return np.asarray(row, dtype=np.int64)


def build_example(d: Dialogue, max_turns: int, L: int, tokenizer: Tokenizer) -> MultiTurnExample:
    if max_turns < 2:
        raise CorpusError("max_turns must be >= 2")
    if L < 3:
        raise CorpusError("L must be >= 3")
    if not d.sentences:
        raise CorpusError("empty dialogue")
    turns = d.sentences[:max_turns]
    rows = [layout_sentence(tokenizer.encode(s), L, tokenizer, first=(i == 0)) for i, s in enumerate(turns)]
    return MultiTurnExample(np.stack(rows))


def build_examples(
    corpus: Iterable[Dialogue], max_turns: int, L: int, tokenizer: Tokenizer, stride: Optional[int] = None
) -> list[MultiTurnExample]:
    """Lay out every dialogue, splitting long ones into max_turns windows.

    ``stride`` defaults to max_turns (consecutive, non-overlapping windows);
    ``stride=1`` makes every turn the first sentence of some window.
    """
    stride = max_turns if stride is None else stride
    if stride < 1:
        raise CorpusError("stride must be >= 1")
    out = []
    for d in corpus:
        for start in range(0, len(d.sentences), stride):
            window = d.sentences[start : start + max_turns]
            # a one-turn tail window still carries an LM signal on its first row
            out.append(build_example(_Window(window), max_turns, L, tokenizer))
    return out


@dataclass(frozen=True)
class _Window:
    sentences: tuple[str, ...]


def seed_sentences(corpus: Iterable[Dialogue], L: int, tokenizer: Tokenizer) -> np.ndarray:
    """Every sentence laid out as a first sentence; returns an (n_sentences, L) array."""
    rows = [layout_sentence(tokenizer.encode(s), L, tokenizer, first=True) for d in corpus for s in d.sentences]
    if not rows:
        return np.zeros((0, L), dtype=np.int64)
    return np.stack(rows)


def all_sentences(corpus: Iterable[Dialogue]) -> list[str]:
    return [s for d in corpus for s in d.sentences]


def pad_grid(ex: MultiTurnExample, max_turns: int, pad_id: int) -> np.ndarray:
    """Flatten to max_turns * L ids, filling missing rows with [PAD]."""
    grid = np.full((max_turns, ex.L), pad_id, dtype=np.int64)
    grid[: ex.n_turns] = ex.tokens
    return grid.reshape(-1)


def save_examples(path: str | Path, examples: Sequence[MultiTurnExample], meta: dict) -> None:
    """Write token grids to an .npz cache with a versioned JSON header."""
    header = dict(meta, version=CACHE_VERSION, count=len(examples))
    turns = np.asarray([e.n_turns for e in examples], dtype=np.int64)
    flat = np.concatenate([e.tokens for e in examples]) if examples else np.zeros((0, 0), dtype=np.int64)
    np.savez_compressed(path, header=np.asarray(json.dumps(header)), turns=turns, rows=flat)


def load_examples(path: str | Path) -> tuple[list[MultiTurnExample], dict]:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("version") != CACHE_VERSION:
            raise CorpusError(f"cache version {header.get('version')} != {CACHE_VERSION}")
        turns, rows = data["turns"], data["rows"]
    bounds = np.concatenate([[0], np.cumsum(turns)])
    examples = [MultiTurnExample(rows[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
    return examples, header
