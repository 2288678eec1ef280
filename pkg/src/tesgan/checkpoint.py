"""Versioned torch checkpoints shared by all models."""
from __future__ import annotations

from pathlib import Path

import torch

FORMAT = "tesgan-checkpoint"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str | Path, kind: str, meta: dict, **payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save({"format": FORMAT, "version": VERSION, "kind": kind, "meta": meta, **payload}, tmp)
    tmp.replace(path)
    return path


def load_checkpoint(path: str | Path, kind: str | None = None) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    ck = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(ck, dict) or ck.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} file")
    if ck.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {ck.get('version')}")
    if kind is not None and ck.get("kind") != kind:
        raise CheckpointError(f"{path}: expected a {kind!r} checkpoint, found {ck.get('kind')!r}")
    return ck
