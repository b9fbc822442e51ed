"""Exact evaluation metrics: rank and linear correlation, AUROC and word error rate."""
from dataclasses import dataclass
from typing import Hashable, List, Sequence

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class WerOutcome:
    """Edit distance of one hypothesis against its reference."""
    errors: int
    ref_len: int
    wer: float

    def __post_init__(self):
        if self.errors < 0 or self.ref_len < 1:
            raise ValueError(
                f"invalid outcome: errors={self.errors}, ref_len={self.ref_len}")


def _as_vectors(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"expected two vectors of equal length, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise ValueError(f"need at least 2 items, got {a.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite input")
    return a, b


def _pearson(a: np.ndarray, b: np.ndarray, error_message: str) -> float:
    a_c = a - a.mean()
    b_c = b - b.mean()
    denominator = np.sqrt(np.sum(a_c ** 2) * np.sum(b_c ** 2))
    if denominator == 0:
        raise ValueError(error_message)
    return float(min(1.0, max(-1.0, np.dot(a_c, b_c) / denominator)))


def spearman_exact(a, b) -> float:
    """Pearson correlation of the midranks of ``a`` and ``b``."""
    a, b = _as_vectors(a, b)
    return _pearson(rankdata(a), rankdata(b), "zero rank variance")


def pearson_exact(a, b) -> float:
    a, b = _as_vectors(a, b)
    return _pearson(a, b, "zero variance")


def auroc(negative_scores, positive_scores) -> float:
    """Probability that a positive outscores a negative, ties counting half.

    Computed from the Mann-Whitney U statistic of the pooled midranks.
    """
    negative = np.asarray(negative_scores, dtype=np.float64).ravel()
    positive = np.asarray(positive_scores, dtype=np.float64).ravel()
    if negative.size == 0 or positive.size == 0:
        raise ValueError("auroc needs non-empty negative and positive scores")
    ranks = rankdata(np.concatenate([negative, positive]))
    n_pos = positive.size
    # twice U, in integers of half-ranks, keeps the result exact
    doubled_rank_sum = int(round(2 * ranks[negative.size:].sum()))
    doubled_u = doubled_rank_sum - n_pos * (n_pos + 1)
    return doubled_u / (2 * n_pos * negative.size)


def edit_distance(ref_tokens: Sequence[Hashable], hyp_tokens: Sequence[Hashable]) -> int:
    """Levenshtein distance over tokens with unit costs."""
    previous = list(range(len(hyp_tokens) + 1))
    for i, ref_token in enumerate(ref_tokens, start=1):
        current = [i] + [0] * len(hyp_tokens)
        for j, hyp_token in enumerate(hyp_tokens, start=1):
            current[j] = min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ref_token != hyp_token),
            )
        previous = current
    return previous[-1]


def wer(ref_tokens: Sequence[Hashable], hyp_tokens: Sequence[Hashable]) -> WerOutcome:
    if len(ref_tokens) == 0:
        raise ValueError("empty reference")
    errors = edit_distance(ref_tokens, hyp_tokens)
    return WerOutcome(errors=errors, ref_len=len(ref_tokens),
                      wer=errors / len(ref_tokens))


def corpus_wer(outcomes: List[WerOutcome]) -> float:
    """Length-weighted WER: pooled errors over pooled reference words."""
    if not outcomes:
        raise ValueError("corpus_wer needs at least one outcome")
    return sum(o.errors for o in outcomes) / sum(o.ref_len for o in outcomes)
