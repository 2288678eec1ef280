"""Sentence feature extractors for FBD."""
from __future__ import annotations

from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import torch


class FeatureExtractor(Protocol):
    def __call__(self, sentences: Sequence[str]) -> np.ndarray: ...


class EncoderFeatures:
    """Frozen bidirectional encoder (e.g. BERT) loaded from a local directory."""

    def __init__(self, model_dir: str | Path, pooling: str = "first", batch_size: int = 64, max_length: int = 64):
        from transformers import AutoModel, AutoTokenizer

        if pooling not in ("first", "mean"):
            raise ValueError("pooling must be 'first' or 'mean'")
        self.tokenizer = AutoTokenizer.from_pretrained(str(model_dir))
        self.model = AutoModel.from_pretrained(str(model_dir)).eval()
        self.pooling, self.batch_size, self.max_length = pooling, batch_size, max_length

    @torch.no_grad()
    def __call__(self, sentences: Sequence[str]) -> np.ndarray:
        out = []
        for i in range(0, len(sentences), self.batch_size):
            enc = self.tokenizer(
                list(sentences[i : i + self.batch_size]), padding=True, truncation=True,
                max_length=self.max_length, return_tensors="pt",
            )
            hidden = self.model(**enc).last_hidden_state
            if self.pooling == "first":
                out.append(hidden[:, 0])
            else:
                mask = enc["attention_mask"][..., None].to(hidden.dtype)
                out.append((hidden * mask).sum(1) / mask.sum(1))
        return torch.cat(out).double().numpy()


class InterpreterFeatures:
    """Offline fallback: pooled final hidden states of the frozen interpreter.

    Sentences are read as first sentences ([CLS] ... [SEP]) through the seed
    path, matching how the interpreter saw them in training.
    """

    def __init__(self, interp, tokenizer, pooling: str = "mean", max_tokens: int = 62, batch_size: int = 256):
        if pooling not in ("first", "mean", "last"):
            raise ValueError("pooling must be 'first', 'mean' or 'last'")
        self.interp, self.tokenizer = interp, tokenizer
        self.pooling, self.max_tokens, self.batch_size = pooling, max_tokens, batch_size

    @torch.no_grad()
    def __call__(self, sentences: Sequence[str]) -> np.ndarray:
        tok = self.tokenizer
        rows = [[tok.cls_id, *tok.encode(s)[: self.max_tokens], tok.sep_id] for s in sentences]
        feats = []
        for i in range(0, len(rows), self.batch_size):
            chunk = rows[i : i + self.batch_size]
            T = max(len(r) for r in chunk)
            ids = torch.full((len(chunk), T), tok.pad_id, dtype=torch.long)
            lengths = torch.tensor([len(r) for r in chunk])
            for j, r in enumerate(chunk):
                ids[j, : len(r)] = torch.as_tensor(r)
            hidden = self.interp.forward_hidden(self.interp.embed_seed(ids))
            if self.pooling == "first":
                feats.append(hidden[:, 0])
            elif self.pooling == "last":
                feats.append(hidden[torch.arange(len(chunk)), lengths - 1])
            else:
                mask = (torch.arange(T)[None, :] < lengths[:, None]).to(hidden.dtype)[..., None]
                feats.append((hidden * mask).sum(1) / mask.sum(1))
        return torch.cat(feats).double().numpy()
