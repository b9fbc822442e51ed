"""Sequence-level uncertainties from teacher-forced token posteriors.

All entropies are in nats and every score is averaged over the sequence
length.
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.special import entr

from .constants import PROB_FLOOR


@dataclass
class TokenPosterior:
    """Per-position categorical distributions along a teacher-forced reference.

    Attributes
    ----------
    probs: np.ndarray
        L x V matrix, one distribution over the vocabulary per position.
    ref_ids: np.ndarray
        The L reference token indices that were fed to the decoder.
    """
    probs: np.ndarray
    ref_ids: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.ref_ids = np.asarray(self.ref_ids, dtype=np.int64)
        if self.probs.ndim != 2:
            raise ValueError(f"probs must be a matrix, got shape {self.probs.shape}")
        length, vocab_size = self.probs.shape
        if length < 1 or vocab_size < 2:
            raise ValueError(f"need L >= 1 and V >= 2, got L={length}, V={vocab_size}")
        if self.ref_ids.shape != (length,):
            raise ValueError(
                f"ref_ids has shape {self.ref_ids.shape}, expected ({length},)")
        if np.any(self.ref_ids < 0) or np.any(self.ref_ids >= vocab_size):
            raise ValueError("ref_ids out of vocabulary range")
        if np.any(self.probs < 0) or not np.allclose(
                self.probs.sum(axis=1), 1.0, rtol=0, atol=1e-6):
            raise ValueError("every row of probs must be a distribution")

    @property
    def length(self):
        return self.probs.shape[0]

    @property
    def vocab_size(self):
        return self.probs.shape[1]


@dataclass
class EnsemblePosterior:
    """Token posteriors of K ensemble members along the same reference."""
    members: List[TokenPosterior]

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError(f"an ensemble needs K >= 2 members, got {len(self.members)}")
        first = self.members[0]
        for member in self.members[1:]:
            if member.probs.shape != first.probs.shape:
                raise ValueError("ensemble members disagree on shape")
            if not np.array_equal(member.ref_ids, first.ref_ids):
                raise ValueError("ensemble members disagree on ref_ids")

    @property
    def stacked(self) -> np.ndarray:
        """K x L x V array of member probabilities."""
        return np.stack([member.probs for member in self.members])


def token_entropy(probs: np.ndarray) -> np.ndarray:
    """Entropy in nats over the last axis."""
    return entr(probs).sum(axis=-1)


def _anchored_mean(values: np.ndarray) -> np.ndarray:
    """Mean over the first axis, exact when all slices are equal."""
    anchor = values[0]
    return anchor + (values - anchor).sum(axis=0) / values.shape[0]


def sequence_confidence(tp: TokenPosterior) -> float:
    """Length-normalised likelihood of the reference, in (0, 1]."""
    ref_probs = tp.probs[np.arange(tp.length), tp.ref_ids]
    return float(np.exp(np.mean(np.log(np.maximum(ref_probs, PROB_FLOOR)))))


def sequence_entropy(tp: TokenPosterior) -> float:
    """Length-averaged token entropy along the reference."""
    return float(np.mean(token_entropy(tp.probs)))


def token_uncertainties(ep: EnsemblePosterior) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-position total, expected (aleatoric) and mutual information.

    total = H(mean_k p_k), expected = mean_k H(p_k), mutual information is
    their difference.
    """
    stacked = ep.stacked
    total = token_entropy(_anchored_mean(stacked))
    expected = _anchored_mean(token_entropy(stacked))
    return total, expected, total - expected


def ensemble_mutual_information(ep: EnsemblePosterior) -> float:
    """Length-averaged mutual information (epistemic uncertainty), clipped at 0."""
    _, _, mutual_information = token_uncertainties(ep)
    return max(0.0, float(np.mean(mutual_information)))


def aleatoric_score(ep: EnsemblePosterior) -> float:
    """Length-averaged expected entropy of the members (data uncertainty)."""
    _, expected, _ = token_uncertainties(ep)
    return float(np.mean(expected))


def ensemble_entropy(ep: EnsemblePosterior) -> float:
    """Length-averaged entropy of the ensemble mean posterior."""
    total, _, _ = token_uncertainties(ep)
    return float(np.mean(total))
