"""Run configuration: INI sections mapped onto the library's config dataclasses."""
from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .discriminators import DiscriminatorConfig
from .generator import GeneratorConfig
from .interpreter import InterpreterConfig, PretrainConfig
from .trainer import DecodeConfig, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    format: str = "dailydialog"
    train: str = ""
    valid: str = ""
    test: str = ""
    max_turns: int = 4
    L: int = 16
    # 0 means max_turns (non-overlapping windows)
    window_stride: int = 0
    # "train" fits a byte-level BPE on the training split; "gpt2" reads vocab.json/merges.txt from gpt2_dir
    tokenizer: str = "train"
    tokenizer_vocab_size: int = 50_260
    gpt2_dir: str = ""


@dataclass
class ModelConfig:
    n_layer: int = 12
    d: int = 768
    n_head: int = 12
    max_positions: int = 1024
    dropout: float = 0.1
    embed_init_std: float = 1.0
    # "scratch" or "gpt2" (copy weights from data.gpt2_dir)
    init: str = "scratch"


@dataclass
class EvalConfig:
    # 0 means one synthesized sentence per test sentence
    n_synth: int = 0
    # "interpreter" pools the frozen interpreter; anything else is a local encoder directory
    fbd_features: str = "interpreter"
    fbd_pooling: str = "first"
    per_epoch: bool = True
    # DSR memorization threshold is 2/3 of this many word tokens; 0 means data.L
    max_len: int = 0


@dataclass
class RunSection:
    out: str = "runs/default"
    seed: Optional[int] = 0


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    interpreter: ModelConfig = field(default_factory=ModelConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    run: RunSection = field(default_factory=RunSection)

    # geometry owned by [data] / [interpreter] and copied into the model sections
    _DERIVED = {
        "pretrain": ("L", "max_turns", "seed"),
        "generator": ("L", "d", "mode", "sigma"),
        "discriminator": ("L", "d"),
        "train": ("seed",),
    }

    def __post_init__(self):
        self.sync()

    def sync(self) -> "RunConfig":
        self.pretrain.L, self.pretrain.max_turns = self.data.L, self.data.max_turns
        self.generator.L = self.discriminator.L = self.data.L
        self.generator.d = self.discriminator.d = self.interpreter.d
        self.generator.mode, self.generator.sigma = self.train.mode, self.train.sigma
        self.pretrain.seed = self.train.seed = self.run.seed
        return self

    @property
    def out_dir(self) -> Path:
        return Path(self.run.out)

    @property
    def metric_max_len(self) -> int:
        return self.eval.max_len or self.data.L

    def interpreter_config(self, tokenizer) -> InterpreterConfig:
        m = self.interpreter
        return InterpreterConfig(
            vocab_size=tokenizer.vocab_size, n_layer=m.n_layer, d=m.d, n_head=m.n_head,
            max_positions=m.max_positions, dropout=m.dropout, embed_init_std=m.embed_init_std,
            pad_id=tokenizer.pad_id, cls_id=tokenizer.cls_id, sep_id=tokenizer.sep_id, tokenizer=tokenizer.name,
        )

    def sections(self) -> dict[str, object]:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _coerce(raw: str, tp, where: str):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if raw.strip() == "":
            return None
        return _coerce(raw, args[0], where)
    try:
        if tp is bool:
            lowered = raw.strip().lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return lowered in ("true", "1", "yes")
        if tp in (int, float, str):
            return tp(raw.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {tp.__name__}") from None
    raise ConfigError(f"{where}: unsupported field type {tp}")


def _build(cls, values: dict[str, str], section: str, base=None):
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(sorted(unknown))}")
    kwargs = dataclasses.asdict(base) if base is not None else {}
    for key, raw in values.items():
        kwargs[key] = _coerce(raw, hints[key], f"[{section}] {key}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def from_mapping(sections: dict[str, dict[str, str]], base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    hints = typing.get_type_hints(RunConfig)
    unknown = set(sections) - set(base.sections())
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")
    built = {}
    for name, current in base.sections().items():
        built[name] = _build(hints[name], sections.get(name, {}), name, current)
    return RunConfig(**built)


def load_config(path: str | Path, overrides: dict[str, dict[str, str]] | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case sensitive (L)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    sections = {s: dict(parser[s]) for s in parser.sections()}
    for section, values in (overrides or {}).items():
        sections.setdefault(section, {}).update(values)
    cfg = from_mapping(sections)
    # relative data paths resolve against the config file's directory
    for key in ("train", "valid", "test", "gpt2_dir"):
        value = getattr(cfg.data, key)
        if value and not Path(value).is_absolute():
            setattr(cfg.data, key, str((path.parent / value).resolve()))
    if not Path(cfg.run.out).is_absolute() and "out" not in (overrides or {}).get("run", {}):
        cfg.run.out = str((path.parent / cfg.run.out).resolve())
    return cfg


def dump_config(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for name, section in cfg.sections().items():
        skip = RunConfig._DERIVED.get(name, ())
        parser[name] = {k: _format(v) for k, v in dataclasses.asdict(section).items() if k not in skip}
    lines = []
    for name in parser.sections():
        lines.append(f"[{name}]")
        lines += [f"{k} = {v}" for k, v in parser[name].items()]
        lines.append("")
    return "\n".join(lines)


def write_snapshot(cfg: RunConfig, run_dir: str | Path, name: str = "config.ini") -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    path = run_dir / name
    path.write_text(dump_config(cfg), encoding="utf-8")
    return path


def toy_config(data_dir: str | Path, out: str | Path, seed: int = 0) -> RunConfig:
    """Settings for the 100-dialogue smoke corpus and a 2-layer, d=128 interpreter."""
    data_dir = Path(data_dir)
    return RunConfig(
        data=DataConfig(
            train=str(data_dir / "train.txt"), valid=str(data_dir / "valid.txt"), test=str(data_dir / "test.txt"),
            tokenizer_vocab_size=600, window_stride=1,
        ),
        interpreter=ModelConfig(n_layer=2, d=128, n_head=4, max_positions=128, embed_init_std=2.0),
        pretrain=PretrainConfig(epochs=20, lr=3e-3, batch=8),
        discriminator=DiscriminatorConfig(ssd_heads=4, sod_hidden=128),
        train=TrainConfig(epochs=6, batch=32, lr_generator=5e-4),
        eval=EvalConfig(n_synth=100),
        run=RunSection(out=str(out), seed=seed),
    )
