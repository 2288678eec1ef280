"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import CheckpointError
from .config import ConfigError, RunConfig, dump_config, load_config, toy_config
from .corpus import CorpusError
from .evaluation import TABLE_HEADER, select_best_epoch
from .interpreter import TrainingDiverged

logger = logging.getLogger("tesgan")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _config(args) -> RunConfig:
    overrides: dict[str, dict[str, str]] = {}
    for attr, section, key in (("mode", "train", "mode"), ("epochs", "train", "epochs"),
                               ("seed", "run", "seed"), ("out", "run", "out")):
        value = getattr(args, attr, None)
        if value is not None:
            overrides.setdefault(section, {})[key] = str(value)
    return load_config(args.config, overrides)


def cmd_toy_corpus(args) -> int:
    from .toydata import write_toy_splits

    out = Path(args.out)
    paths = write_toy_splits(out, n_train=args.n_train, n_valid=args.n_valid, n_test=args.n_test, seed=args.seed)
    cfg = toy_config(out, out / "run", seed=args.seed)
    (out / "toy.ini").write_text(dump_config(cfg), encoding="utf-8")
    for split, path in paths.items():
        print(f"{split}\t{path}")
    print(f"config\t{out / 'toy.ini'}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    from .pipeline import run_pretrain

    path = run_pretrain(_config(args), resume=args.resume)
    print(path)
    return EXIT_OK


def cmd_train(args) -> int:
    from .pipeline import run_train

    cfg = _config(args)
    state = run_train(cfg, args.interpreter)
    print(f"epochs\t{state.epoch}\nd_updates\t{state.d_updates}\ng_updates\t{state.g_updates}")
    if state.metric_history:
        best = select_best_epoch(state.metric_history)
        print(f"best_epoch\t{best['epoch']}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .pipeline import run_synth

    cfg = load_config(args.config) if args.config else None
    sents = run_synth(args.checkpoint, args.n, args.out, cfg, args.baseline, args.seed, args.interpreter)
    print(f"wrote {len(sents)} sentences to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .pipeline import run_eval

    cfg = load_config(args.config) if args.config else None
    report = run_eval(args.real, args.syn, args.train, args.out, cfg, args.interpreter, args.max_len)
    print(TABLE_HEADER)
    print(report.table_row(args.method))
    return EXIT_OK


def cmd_report(args) -> int:
    from .plotting import render_run

    for path in render_run(args.run, args.out):
        print(path)
    return EXIT_OK


def cmd_run(args) -> int:
    """pretrain -> train -> synthesize from the best epoch -> evaluate on the test split."""
    from .pipeline import export_split_sentences, run_eval, run_pretrain, run_synth, run_train
    from .plotting import render_run

    cfg = _config(args)
    out = cfg.out_dir
    interp_path = run_pretrain(cfg)
    state = run_train(cfg, interp_path)
    epoch = select_best_epoch(state.metric_history)["epoch"] if state.metric_history else state.epoch
    checkpoint = out / "checkpoints" / f"epoch_{epoch:03d}.pt"
    splits = export_split_sentences(cfg, out / "data")
    n = cfg.eval.n_synth or sum(1 for _ in splits["test"].read_text(encoding="utf-8").splitlines())
    seed = cfg.run.seed or 0
    run_synth(checkpoint, n, out / "synth" / "best.txt", cfg, seed=seed)
    run_synth(interp_path, n, out / "synth" / "random_noise.txt", cfg, baseline="random-noise", seed=seed)
    label = "P-TESGAN" if cfg.train.mode == "p-tesgan" else "TESGAN"
    rows = []
    for name, tag in ((label, "best"), ("Random noise", "random_noise")):
        report = run_eval(splits["test"], out / "synth" / f"{tag}.txt", splits["train"], out / "eval" / tag, cfg, interp_path)
        rows.append(report.table_row(name))
    render_run(out)
    (out / "summary.json").write_text(json.dumps({"best_epoch": epoch, "checkpoint": str(checkpoint)}, indent=2))
    print(TABLE_HEADER)
    print("\n".join(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tesgan", description="Seed-space text GAN: pretrain, train, synthesize, evaluate.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(p, train_flags=False):
        p.add_argument("--config", required=True, help="INI run configuration")
        p.add_argument("--seed", type=int, help="override [run] seed")
        p.add_argument("--out", help="override [run] out (the run directory)")
        if train_flags:
            p.add_argument("--mode", choices=("tesgan", "p-tesgan"), help="override [train] mode")
            p.add_argument("--epochs", type=_positive, help="override [train] epochs")

    p = sub.add_parser("toy-corpus", help="write the template toy corpus and a matching config")
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=_positive, default=100)
    p.add_argument("--n-valid", type=_positive, default=20)
    p.add_argument("--n-test", type=_positive, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_toy_corpus)

    p = sub.add_parser("pretrain", help="pretrain the seed interpreter")
    with_config(p)
    p.add_argument("--resume", action="store_true", help="continue from <out>/pretrain/last.pt")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="adversarial training against a frozen interpreter")
    with_config(p, train_flags=True)
    p.add_argument("--interpreter", help="interpreter checkpoint (default <out>/interpreter.pt)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="synthesize sentences from a checkpoint")
    p.add_argument("--checkpoint", required=True, help="adversarial checkpoint, or interpreter checkpoint with --baseline")
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--out", required=True, help="output corpus, one sentence per line")
    p.add_argument("--baseline", choices=("random-noise",), help="decode standard-normal seeds instead of generator output")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="INI configuration for decode settings")
    p.add_argument("--interpreter", help="interpreter checkpoint (default: the one recorded in the checkpoint)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score a synthesized corpus")
    p.add_argument("--real", required=True)
    p.add_argument("--syn", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True, help="directory for report.txt and report.json")
    p.add_argument("--config", help="INI configuration for [eval] settings")
    p.add_argument("--interpreter", help="interpreter checkpoint for FBD features and LM score")
    p.add_argument("--max-len", type=_positive, help="memorization length reference (default [data] L)")
    p.add_argument("--method", default="TESGAN", help="row label in the printed table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render figures and epochs.tsv from a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--out", help="output directory (default <run>/report)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="pretrain, train, synthesize, and evaluate in one go")
    with_config(p, train_flags=True)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"tesgan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, CorpusError, CheckpointError, TrainingDiverged, ValueError, RuntimeError, OSError) as exc:
        print(f"tesgan: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
