"""Per-epoch figures and a delimited summary for a finished run directory."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (4.8, 3.0),
    "figure.dpi": 120,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
}


def _load_json(path: Path) -> list[dict]:
    return json.loads(path.read_text(encoding="utf-8")) if path.exists() else []


def _series(rows: Sequence[dict], key: str) -> tuple[list[int], list[float]]:
    pts = [(r["epoch"], r[key]) for r in rows if r.get(key) is not None]
    return [p[0] for p in pts], [p[1] for p in pts]


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_metric(rows: Sequence[dict], keys: Sequence[str], ylabel: str, path: Path, title: str | None = None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for key in keys:
            x, y = _series(rows, key)
            ax.plot(x, y, marker="o", label=key.upper())
        ax.set_xlabel("epoch")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(keys) > 1:
            ax.legend(frameon=False)
        ax.xaxis.get_major_locator().set_params(integer=True)
        return _save(fig, path)


def plot_losses(epoch_losses: Sequence[dict], path: Path) -> Path:
    keys = [k for k in ("d_total", "g_total", "g_bce_ssd", "g_bce_sod", "g_sdp", "g_sfp") if any(k in r for r in epoch_losses)]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for key in keys:
            x, y = _series(epoch_losses, key)
            ax.plot(x, y, marker="." if key.startswith("g_") and key != "g_total" else "o", label=key)
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean loss")
        ax.legend(frameon=False, ncol=2)
        ax.xaxis.get_major_locator().set_params(integer=True)
        return _save(fig, path)


def plot_pretrain(history: Sequence[dict], path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x, y = _series(history, "loss")
        ax.plot(x, y, marker="o", color="C0")
        ax.set_xlabel("epoch")
        ax.set_ylabel("LM loss", color="C0")
        twin = ax.twinx()
        twin.spines["right"].set_visible(True)
        bx, by = _series(history, "bleu4")
        twin.plot(bx, by, marker="s", color="C1")
        twin.set_ylabel("validation BLEU-4", color="C1")
        twin.grid(False)
        return _save(fig, path)


def write_tsv(rows: Sequence[dict], path: Path) -> Path:
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys, delimiter="\t", restval="")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in r.items()})
    return path


def render_run(run_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Write every figure the run's logs support plus epochs.tsv; returns the written paths."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = _load_json(run_dir / "epoch_metrics.json")
    losses = _load_json(run_dir / "epoch_losses.json")
    history = _load_json(run_dir / "pretrain_history.json")
    written = []
    if metrics:
        written.append(plot_metric(metrics, ["fbd"], "FBD", out_dir / "fbd.png"))
        msj_keys = [k for k in ("msj2", "msj3", "msj4", "msj5") if any(k in r for r in metrics)]
        written.append(plot_metric(metrics, msj_keys, "MSJ", out_dir / "msj.png"))
        written.append(plot_metric(metrics, ["dsr", "r_syn", "r_unq"], "ratio", out_dir / "dsr.png"))
    if losses:
        written.append(plot_losses(losses, out_dir / "losses.png"))
    if history:
        written.append(plot_pretrain(history, out_dir / "pretrain.png"))
    by_epoch: dict[int, dict] = {}
    for r in list(losses) + list(metrics):
        by_epoch.setdefault(r["epoch"], {"epoch": r["epoch"]}).update(r)
    if by_epoch:
        written.append(write_tsv([by_epoch[e] for e in sorted(by_epoch)], out_dir / "epochs.tsv"))
    if not written:
        raise FileNotFoundError(f"no training logs found in {run_dir}")
    return written
