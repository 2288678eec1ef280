"""Tokenizers used for sentence layout, plus the word splitter used by metrics."""
from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from tokenizers import Tokenizer as _HFTokenizer
from tokenizers import decoders, models, pre_tokenizers, trainers

SPECIAL_TOKENS = ("[PAD]", "[CLS]", "[SEP]")

_WORD_RE = re.compile(r"\w+(?:'\w+)?|[^\w\s]")


def word_tokens(text: str) -> list[str]:
    """Split text into word and punctuation tokens (metric tokenization)."""
    return _WORD_RE.findall(text)


class Tokenizer(Protocol):
    name: str
    vocab_size: int
    pad_id: int
    cls_id: int
    sep_id: int

    def encode(self, text: str) -> list[int]: ...

    def decode(self, ids: Sequence[int]) -> str: ...


class BPETokenizer:
    """Byte-level BPE with the three layout specials appended to the vocabulary."""

    def __init__(self, backend: _HFTokenizer, name: str = "bpe"):
        self._tok = backend
        self.name = name
        for tok in SPECIAL_TOKENS:
            if backend.token_to_id(tok) is None:
                backend.add_special_tokens([tok])
        self.pad_id = backend.token_to_id("[PAD]")
        self.cls_id = backend.token_to_id("[CLS]")
        self.sep_id = backend.token_to_id("[SEP]")
        self.vocab_size = backend.get_vocab_size(with_added_tokens=True)
        self._special_ids = {self.pad_id, self.cls_id, self.sep_id}

    @classmethod
    def train(cls, texts: Iterable[str], vocab_size: int = 50_260, min_frequency: int = 2) -> "BPETokenizer":
        backend = _HFTokenizer(models.BPE())
        backend.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
        backend.decoder = decoders.ByteLevel()
        trainer = trainers.BpeTrainer(
            vocab_size=vocab_size,
            min_frequency=min_frequency,
            special_tokens=list(SPECIAL_TOKENS),
            initial_alphabet=pre_tokenizers.ByteLevel.alphabet(),
            show_progress=False,
        )
        backend.train_from_iterator(texts, trainer=trainer)
        return cls(backend, name=f"bpe-trained-{backend.get_vocab_size(with_added_tokens=True)}")

    @classmethod
    def from_gpt2_files(cls, vocab_file: str | Path, merges_file: str | Path) -> "BPETokenizer":
        """GPT-2 vocabulary (50,257) plus [PAD]/[CLS]/[SEP] -> 50,260 entries."""
        backend = _HFTokenizer(models.BPE.from_file(str(vocab_file), str(merges_file)))
        backend.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
        backend.decoder = decoders.ByteLevel()
        return cls(backend, name="gpt2-bpe")

    @classmethod
    def load(cls, path: str | Path) -> "BPETokenizer":
        path = Path(path)
        meta_path = path.with_suffix(".meta.json")
        name = json.loads(meta_path.read_text())["name"] if meta_path.exists() else "bpe"
        return cls(_HFTokenizer.from_file(str(path)), name=name)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self._tok.save(str(path))
        path.with_suffix(".meta.json").write_text(json.dumps({"name": self.name}))

    def encode(self, text: str) -> list[int]:
        return [i for i in self._tok.encode(text, add_special_tokens=False).ids if i not in self._special_ids]

    def decode(self, ids: Sequence[int]) -> str:
        ids = [int(i) for i in ids if int(i) not in self._special_ids]
        return self._tok.decode(ids, skip_special_tokens=True)
