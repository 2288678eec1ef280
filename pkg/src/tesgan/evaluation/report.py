"""EvalReport assembly, serialization, and best-epoch selection."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from ..tokenizer import word_tokens
from . import metrics

MSJ_ORDERS = (2, 3, 4, 5)
SBL_ORDERS = (3, 4)
TABLE_COLUMNS = ("FBD", "MSJ4", "MSJ5", "DSR (R_syn, R_unq)", "LM", "SBL3", "SBL4")
TABLE_HEADER = " | ".join(("Method",) + TABLE_COLUMNS)


@dataclass
class EvalReport:
    fbd: Optional[float]
    msj: dict[int, float]
    dsr: float
    r_syn: float
    r_unq: float
    lm: Optional[float]
    sbl: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["msj"] = {str(k): v for k, v in self.msj.items()}
        d["sbl"] = {str(k): v for k, v in self.sbl.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["msj"] = {int(k): v for k, v in d["msj"].items()}
        d["sbl"] = {int(k): v for k, v in d.get("sbl", {}).items()}
        return cls(**d)

    def table_row(self, method: str = "TESGAN") -> str:
        """One line in the column order FBD, MSJ4, MSJ5, DSR (R_syn, R_unq), LM, SBL3, SBL4."""

        def f(x):
            return "-" if x is None else f"{x:.3f}"

        cells = [
            method, f(self.fbd), f(self.msj.get(4)), f(self.msj.get(5)),
            f"{self.dsr:.3f} ({self.r_syn:.3g}, {self.r_unq:.3f})",
            f(self.lm), f(self.sbl.get(3)), f(self.sbl.get(4)),
        ]
        return " | ".join(cells)

    def flat(self) -> dict:
        row = {"fbd": self.fbd}
        row.update({f"msj{n}": v for n, v in self.msj.items()})
        row.update({"dsr": self.dsr, "r_syn": self.r_syn, "r_unq": self.r_unq, "lm": self.lm})
        row.update({f"sbl{n}": v for n, v in self.sbl.items()})
        return row


def evaluate(
    real: Sequence[str],
    syn: Sequence[str],
    train: Sequence[str],
    max_len: int,
    fx=None,
    lm=None,
    tokenizer=None,
    msj_orders=MSJ_ORDERS,
    sbl_orders=SBL_ORDERS,
) -> EvalReport:
    """Score raw-text corpora; FBD needs ``fx``, LM needs ``lm`` plus ``tokenizer``."""
    if not real or not syn:
        raise ValueError("real and synthesized corpora must be non-empty")
    real_t = [word_tokens(s) for s in real]
    syn_t = [word_tokens(s) for s in syn]
    train_t = [word_tokens(s) for s in train]
    score, r_syn, r_unq = metrics.dsr(syn_t, train_t, max_len)
    lm_value = None
    if lm is not None and tokenizer is not None:
        lm_value = metrics.lm_score([tokenizer.encode(s) for s in syn], lm)
    return EvalReport(
        fbd=metrics.fbd(real, syn, fx) if fx is not None else None,
        msj={n: metrics.msj(real_t, syn_t, n) for n in msj_orders},
        dsr=score,
        r_syn=r_syn,
        r_unq=r_unq,
        lm=lm_value,
        sbl={n: metrics.self_bleu(syn_t, n) for n in sbl_orders} if len(syn_t) >= 2 else {},
    )


def write_report(report: EvalReport, out_dir: str | Path, method: str = "TESGAN") -> tuple[Path, Path]:
    """Write report.txt (Table-2 style) and report.json (lossless key-value form)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    txt, js = out_dir / "report.txt", out_dir / "report.json"
    lines = [TABLE_HEADER, report.table_row(method), ""]
    lines += [f"{k}\t{v!r}" for k, v in report.flat().items()]
    txt.write_text("\n".join(lines) + "\n", encoding="utf-8")
    js.write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    return txt, js


def read_report(path: str | Path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def select_best_epoch(history: Sequence[dict]) -> dict:
    """Lexicographic pick: lowest FBD, then highest MSJ4, then highest DSR."""
    if not history:
        raise ValueError("empty metric history")

    def key(row):
        fbd = row.get("fbd")
        return (float("inf") if fbd is None else fbd, -row.get("msj4", 0.0), -row.get("dsr", 0.0))

    return min(history, key=key)
