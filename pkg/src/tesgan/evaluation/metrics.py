"""Corpus-level generation metrics.

Every function takes already-tokenized sentences (lists of string tokens)
except where noted; use :func:`tesgan.tokenizer.word_tokens` for raw text.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from typing import Callable, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

Sentence = Sequence[str]


def ngrams(tokens: Sentence, n: int) -> Iterable[tuple[str, ...]]:
    return (tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


# -- Frechet distance ---------------------------------------------------------


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((a + a.T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def frechet_distance(mu1, sigma1, mu2, sigma2) -> float:
    """sqrt(||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2))) for Gaussian fits.

    tr((S1 S2)^(1/2)) equals the sum of square roots of the eigenvalues of the
    symmetric PSD matrix S1^(1/2) S2 S1^(1/2); negative eigenvalues from
    round-off are clamped to zero.
    """
    mu1, mu2 = np.atleast_1d(mu1).astype(np.float64), np.atleast_1d(mu2).astype(np.float64)
    s1, s2 = np.atleast_2d(sigma1).astype(np.float64), np.atleast_2d(sigma2).astype(np.float64)
    root1 = _psd_sqrt(s1)
    m = root1 @ s2 @ root1
    eig = np.linalg.eigvalsh((m + m.T) / 2)
    tr_cross = np.sqrt(np.clip(eig, 0, None)).sum()
    d2 = float(np.sum((mu1 - mu2) ** 2) + np.trace(s1) + np.trace(s2) - 2 * tr_cross)
    return math.sqrt(max(d2, 0.0))


def gaussian_fit(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, None]
    if len(features) < 2:
        raise ValueError("need at least 2 feature vectors to estimate a covariance")
    return features.mean(0), np.atleast_2d(np.cov(features, rowvar=False))


def fbd_from_features(real: np.ndarray, fake: np.ndarray) -> float:
    return frechet_distance(*gaussian_fit(real), *gaussian_fit(fake))


def fbd(real_sents: Sequence[str], fake_sents: Sequence[str], fx: Callable[[Sequence[str]], np.ndarray]) -> float:
    """Frechet distance between encoder features of two raw-text corpora."""
    if len(real_sents) < 2 or len(fake_sents) < 2:
        raise ValueError("FBD needs at least 2 sentences in each corpus")
    return fbd_from_features(fx(list(real_sents)), fx(list(fake_sents)))


# -- Multi-sets Jaccard ---------------------------------------------------------


def _normalized_counts(corpus: Sequence[Sentence], n: int) -> dict:
    counts = Counter(g for s in corpus for g in ngrams(s, n))
    total = sum(counts.values())
    return {g: c / total for g, c in counts.items()} if total else {}


def msj(real: Sequence[Sentence], fake: Sequence[Sentence], n: int) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    if not real or not fake:
        raise ValueError("MSJ needs non-empty corpora")
    cr, cf = _normalized_counts(real, n), _normalized_counts(fake, n)
    if not cr or not cf:
        raise ValueError(f"every sentence in one corpus is shorter than {n} tokens")
    keys = cr.keys() | cf.keys()
    num = sum(min(cr.get(g, 0.0), cf.get(g, 0.0)) for g in keys)
    den = sum(max(cr.get(g, 0.0), cf.get(g, 0.0)) for g in keys)
    return num / den


# -- Data Synthesis Ratio ------------------------------------------------------


def dsr(syn: Sequence[Sentence], train: Sequence[Sentence], max_len: int) -> tuple[float, float, float]:
    """(DSR, R_syn, R_unq); memorized = exact training copy longer than 2/3 * max_len tokens."""
    if max_len <= 0:
        raise ValueError("max_len must be positive")
    if not syn:
        raise ValueError("DSR needs a non-empty synthesized corpus")
    train_set = {tuple(s) for s in train}
    threshold = 2 * max_len / 3
    memorized = sum(1 for s in syn if len(s) > threshold and tuple(s) in train_set)
    r_syn = (len(syn) - memorized) / len(syn)
    r_unq = len({tuple(s) for s in syn}) / len(syn)
    score = 2 * r_syn * r_unq / (r_syn + r_unq) if r_syn + r_unq else 0.0
    return score, r_syn, r_unq


# -- BLEU / Self-BLEU -------------------------------------------------------------


def _clipped_matches(refs: Sequence[Sentence], hyp: Sentence, n: int) -> tuple[int, int]:
    hyp_counts = Counter(ngrams(hyp, n))
    max_ref: Counter = Counter()
    for r in refs:
        for g, c in Counter(ngrams(r, n)).items():
            if c > max_ref[g]:
                max_ref[g] = c
    matched = sum(min(c, max_ref[g]) for g, c in hyp_counts.items())
    return matched, max(1, sum(hyp_counts.values()))


def _closest_ref_len(refs: Sequence[Sentence], hyp_len: int) -> int:
    return min((len(r) for r in refs), key=lambda r: (abs(r - hyp_len), r))


def _brevity_penalty(ref_len: int, hyp_len: int) -> float:
    if hyp_len > ref_len:
        return 1.0
    if hyp_len == 0:
        return 0.0
    return math.exp(1 - ref_len / hyp_len)


def _bleu_from_counts(matches, totals, hyp_len, ref_len, n, epsilon) -> float:
    if matches[0] == 0:
        return 0.0
    # add-epsilon smoothing on orders with no matches
    logs = [math.log((m if m else epsilon) / t) for m, t in zip(matches, totals)]
    return _brevity_penalty(ref_len, hyp_len) * math.exp(sum(logs) / n)


def sentence_bleu(refs: Sequence[Sentence], hyp: Sentence, n: int = 4, epsilon: float = 0.1) -> float:
    """BLEU-n with uniform weights, brevity penalty, and add-epsilon smoothing."""
    stats = [_clipped_matches(refs, hyp, k) for k in range(1, n + 1)]
    return _bleu_from_counts(
        [m for m, _ in stats], [t for _, t in stats], len(hyp), _closest_ref_len(refs, len(hyp)), n, epsilon
    )


def corpus_bleu(refs_list: Sequence[Sequence[Sentence]], hyps: Sequence[Sentence], n: int = 4, epsilon: float = 0.1) -> float:
    matches, totals = [0] * n, [0] * n
    hyp_len = ref_len = 0
    for refs, hyp in zip(refs_list, hyps):
        for k in range(n):
            m, t = _clipped_matches(refs, hyp, k + 1)
            matches[k] += m
            totals[k] += t
        hyp_len += len(hyp)
        ref_len += _closest_ref_len(refs, len(hyp))
    return _bleu_from_counts(matches, totals, hyp_len, ref_len, n, epsilon)


def self_bleu(sents: Sequence[Sentence], n: int, epsilon: float = 0.1) -> float:
    """Mean BLEU-n of each sentence against all the others; lower is more diverse."""
    if len(sents) < 2:
        raise ValueError("Self-BLEU needs at least 2 sentences")
    scores = [sentence_bleu(list(sents[:i]) + list(sents[i + 1 :]), s, n, epsilon) for i, s in enumerate(sents)]
    return float(np.mean(scores))


# -- LM score -------------------------------------------------------------------


def lm_score(sents: Sequence[Sequence[int]], lm) -> float:
    """Mean per-token cross entropy under a frozen LM exposing ``sentence_cross_entropy``."""
    kept = [s for s in sents if len(s) > 0]
    if len(kept) < len(sents):
        logger.warning("skipping %d empty sentences in LM score", len(sents) - len(kept))
    if not kept:
        raise ValueError("LM score needs at least one non-empty sentence")
    return float(np.mean(lm.sentence_cross_entropy(kept)))
