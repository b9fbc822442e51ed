"""Synthetic autoregressive teachers with exact token posteriors.

A teacher is a bigram channel: the logits of the next output token depend on
the aligned source token and the previous output token only,
``logits[source][previous][next]``. Every posterior is therefore a table
lookup and every sequence-level target has a closed form.

Ensemble members perturb the base logits with seeded Gaussian noise. Noise is
larger for source tokens that were rare in the teacher's training unigram, so
corpora drawn from a shifted unigram carry more epistemic uncertainty.
"""
import functools
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import softmax

from .constants import GREEDY_TEMPERATURE, SPLITS, corpus_schema, teacher_schema
from .metrics import wer
from .naphead import FeatureSequence
from .records import ScoreRecord, records_to_frame
from .uncertainty import (
    EnsemblePosterior,
    TokenPosterior,
    aleatoric_score,
    ensemble_mutual_information,
    sequence_confidence,
    sequence_entropy,
)

BOS = 0
"""Token fed as the previous output at the first position."""


@dataclass
class TeacherSpec:
    vocab_size: int
    temperature: float
    seed: int
    logit_scale: float = 2.0
    train_unigram: Optional[List[float]] = None

    def __post_init__(self):
        teacher_schema.validate(self.to_dict())
        if self.train_unigram is not None and len(self.train_unigram) != self.vocab_size:
            raise ValueError("train_unigram must have vocab_size entries")

    @classmethod
    def from_dict(cls, teacher_dict: dict):
        return cls(**teacher_schema.validate(teacher_dict))

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @functools.cached_property
    def logits(self) -> np.ndarray:
        """Base V x V x V logit tensor."""
        rng = np.random.default_rng(self.seed)
        shape = (self.vocab_size,) * 3
        return rng.standard_normal(shape) * self.logit_scale

    def perturbation_scale(self, sigma: float) -> np.ndarray:
        """Per source token noise level: sigma, raised up to 3x for rare tokens."""
        if self.train_unigram is None:
            return np.full(self.vocab_size, float(sigma))
        unigram = np.asarray(self.train_unigram, dtype=np.float64)
        with np.errstate(divide="ignore"):
            rarity = np.minimum(3.0, (self.vocab_size * unigram) ** -0.5)
        return sigma * rarity

    def member_logits(self, member: int, sigma: float) -> np.ndarray:
        """Logits of ensemble member ``member``: base plus seeded noise."""
        if sigma == 0:
            return self.logits
        rng = np.random.default_rng([self.seed, member])
        noise = rng.standard_normal(self.logits.shape)
        return self.logits + self.perturbation_scale(sigma)[:, None, None] * noise


@dataclass
class CorpusSpec:
    """Configuration of one generated corpus.

    ``temperature`` is the teacher-forcing temperature of the posteriors and
    defaults to the teacher's. ``temperature_small`` and
    ``temperature_large`` decode the hypotheses of the two deferral models.
    """
    name: str
    n_examples: int
    length_range: List[int]
    source_unigram: List[float]
    domain: str
    temperature_small: float
    temperature_large: float
    ensemble_size: int
    sigma: float
    seed: int
    temperature: Optional[float] = None
    splits: Dict[str, float] = field(default_factory=lambda: {"test": 1.0})
    encoder_depth: int = 2
    feature_width: int = 64
    encoder_seed: int = 0
    cost_small: float = 1.0
    cost_large: float = 4.0
    cost_proxy: float = 0.05

    def __post_init__(self):
        corpus_schema.validate(self.to_dict())

    @classmethod
    def from_dict(cls, corpus_dict: dict):
        return cls(**corpus_schema.validate(corpus_dict))

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def split_of(self, index: int) -> str:
        """Split tag of the record at ``index``, assigned in index order."""
        bound = 0.0
        for split in SPLITS:
            bound += self.splits.get(split, 0.0)
            if index < round(bound * self.n_examples):
                return split
        return [s for s in SPLITS if self.splits.get(s, 0.0) > 0][-1]


@dataclass
class GenerationTrace:
    """Tokens and posteriors behind one generated record."""
    source: List[int]
    reference: List[int]
    hypothesis_small: List[int]
    hypothesis_large: List[int]
    teacher: TokenPosterior
    ensemble: EnsemblePosterior


@functools.lru_cache(maxsize=None)
def _token_embedding(token: int, width: int, seed: int) -> np.ndarray:
    return np.random.default_rng([seed, 0, token]).standard_normal(width)


@functools.lru_cache(maxsize=None)
def _encoder_layer(layer: int, width: int, seed: int):
    rng = np.random.default_rng([seed, 1, layer])
    return rng.standard_normal((width, width)) / math.sqrt(width), 0.1 * rng.standard_normal(width)


def _position_encoding(length: int, width: int) -> np.ndarray:
    positions = np.arange(length)[:, None]
    frequencies = np.exp(-math.log(10000.0) * (np.arange(width) // 2 * 2) / width)
    angles = positions * frequencies[None, :]
    return np.where(np.arange(width) % 2 == 0, np.sin(angles), np.cos(angles))


def frozen_encoder(tokens: Sequence[int], depth: int, width: int, seed: int = 0,
                   return_layers: bool = False):
    """Deterministic untrained encoder.

    Token embeddings (seeded by token id) plus sinusoidal positions, followed
    by ``depth`` residual layers ``h + tanh(h A + c)``. Layer i is the same
    for every depth, so shallower outputs are prefixes of deeper ones.

    Returns
    -------
    FeatureSequence, or the list of per-layer L x d outputs with ``return_layers``.
    """
    if depth < 1:
        raise ValueError(f"depth must be at least 1, got {depth}")
    if len(tokens) == 0:
        raise ValueError("cannot encode an empty token sequence")
    hidden = np.stack([_token_embedding(int(t), width, seed) for t in tokens])
    hidden = hidden + _position_encoding(len(tokens), width)
    layers = []
    for layer in range(depth):
        weights, bias = _encoder_layer(layer, width, seed)
        hidden = hidden + np.tanh(hidden @ weights + bias)
        layers.append(hidden)
    if return_layers:
        return layers
    return FeatureSequence(hidden)


def greedy_decode(logits: np.ndarray, source: Sequence[int]) -> List[int]:
    """Argmax decoding, one output token per source token."""
    previous, output = BOS, []
    for s in source:
        previous = int(np.argmax(logits[s, previous]))
        output.append(previous)
    return output


def sample_decode(logits: np.ndarray, source: Sequence[int], temperature: float,
                  rng: np.random.Generator) -> List[int]:
    """Gumbel-max sampling at ``temperature``; greedy at or below GREEDY_TEMPERATURE."""
    if temperature <= GREEDY_TEMPERATURE:
        return greedy_decode(logits, source)
    previous, output = BOS, []
    for s in source:
        gumbel = rng.gumbel(size=logits.shape[-1])
        previous = int(np.argmax(logits[s, previous] / temperature + gumbel))
        output.append(previous)
    return output


def teacher_forced(logits: np.ndarray, source: Sequence[int], reference: Sequence[int],
                   temperature: float) -> TokenPosterior:
    """Posteriors along the reference, fed back as the previous token."""
    previous = [BOS] + list(reference[:-1])
    probs = softmax(logits[np.asarray(source), np.asarray(previous)] / temperature, axis=-1)
    return TokenPosterior(probs=probs, ref_ids=np.asarray(reference))


def gen_record(spec: CorpusSpec, teacher: TeacherSpec, members: List[np.ndarray],
               index: int) -> ScoreRecord:
    """Generate the record at ``index``; its randomness depends on (seed, index) only."""
    rng = np.random.default_rng([spec.seed, index])
    length = int(rng.integers(spec.length_range[0], spec.length_range[1] + 1))
    unigram = np.asarray(spec.source_unigram, dtype=np.float64)
    source = [int(t) for t in rng.choice(teacher.vocab_size, size=length,
                                         p=unigram / unigram.sum())]
    reference = greedy_decode(teacher.logits, source)
    temperature = spec.temperature if spec.temperature is not None else teacher.temperature

    teacher_posterior = teacher_forced(teacher.logits, source, reference, temperature)
    ensemble = EnsemblePosterior(
        [teacher_forced(m, source, reference, temperature) for m in members])

    hypothesis_small = sample_decode(teacher.logits, source, spec.temperature_small, rng)
    hypothesis_large = sample_decode(teacher.logits, source, spec.temperature_large, rng)
    outcome_small = wer(reference, hypothesis_small)
    outcome_large = wer(reference, hypothesis_large)

    targets = {
        "confidence": sequence_confidence(teacher_posterior),
        "entropy": sequence_entropy(teacher_posterior),
        "mi": ensemble_mutual_information(ensemble),
        "aleatoric": aleatoric_score(ensemble),
        "similarity_small": math.exp(-outcome_small.wer),
        "similarity_large": math.exp(-outcome_large.wer),
        "wer_small": outcome_small.wer,
        "wer_large": outcome_large.wer,
        "errors_small": float(outcome_small.errors),
        "errors_large": float(outcome_large.errors),
        "ref_len": float(outcome_large.ref_len),
    }
    targets["similarity"] = targets["similarity_large"]
    targets["wer"] = targets["wer_large"]
    targets["errors"] = targets["errors_large"]
    times = {
        "small": spec.cost_small * (1 + len(hypothesis_small)),
        "large": spec.cost_large * (1 + len(hypothesis_large)),
        "proxy": spec.cost_proxy * (1 + length),
    }
    features = frozen_encoder(source, spec.encoder_depth, spec.feature_width,
                              spec.encoder_seed).features
    return ScoreRecord(
        id=f"{spec.name}-{index:05d}",
        split=spec.split_of(index),
        domain=spec.domain,
        features=features,
        targets=targets,
        times=times,
        trace=GenerationTrace(source, reference, hypothesis_small, hypothesis_large,
                              teacher_posterior, ensemble),
    )


def gen_corpus(spec: CorpusSpec, teacher: TeacherSpec) -> List[ScoreRecord]:
    """Generate all records of a corpus, deterministically from the two specs."""
    if spec.n_examples == 0:
        raise ValueError("empty corpus spec")
    if len(spec.source_unigram) != teacher.vocab_size:
        raise ValueError(
            f"source_unigram has {len(spec.source_unigram)} entries, "
            f"expected vocab_size {teacher.vocab_size}")
    members = [teacher.member_logits(k, spec.sigma) for k in range(spec.ensemble_size)]
    logging.info("Generate %s records for corpus %s", spec.n_examples, spec.name)
    return [gen_record(spec, teacher, members, i) for i in range(spec.n_examples)]


def corpus_summary(records: List[ScoreRecord]) -> pd.DataFrame:
    """Record counts and mean source/reference lengths per domain and split."""
    frame = records_to_frame(records)
    summary = frame.groupby(["domain", "split"], observed=True).agg(
        records=("id", "count"),
        source_length=("length", "mean"),
        reference_length=("ref_len", "mean"),
    )
    return summary.reset_index()


def _plain_entropy(row) -> float:
    return -sum(p * math.log(p) for p in row if p > 0)


def _plain_edit_distance(a, b) -> int:
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        for j in range(len(b) + 1):
            if i == 0 or j == 0:
                table[i][j] = i + j
            else:
                table[i][j] = min(table[i - 1][j] + 1, table[i][j - 1] + 1,
                                  table[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return table[-1][-1]


def oracle_scores(record: ScoreRecord) -> Dict[str, float]:
    """Recompute a generated record's targets with plain python loops.

    Needs the in-memory generation trace; records read back from JSONL
    do not carry one.
    """
    trace: GenerationTrace = record.trace
    if trace is None:
        raise ValueError(f"record {record.id} has no generation trace")
    teacher_rows = trace.teacher.probs.tolist()
    member_rows = [m.probs.tolist() for m in trace.ensemble.members]
    length = len(trace.reference)
    n_members = len(member_rows)

    log_likelihood = sum(math.log(max(teacher_rows[l][y], 1e-12))
                         for l, y in enumerate(trace.reference))
    entropy = sum(_plain_entropy(row) for row in teacher_rows) / length

    mutual_information = 0.0
    expected = 0.0
    for l in range(length):
        rows = [member[l] for member in member_rows]
        mean_row = [sum(column) / n_members for column in zip(*rows)]
        member_entropy = sum(_plain_entropy(row) for row in rows) / n_members
        mutual_information += _plain_entropy(mean_row) - member_entropy
        expected += member_entropy

    errors_small = _plain_edit_distance(trace.reference, trace.hypothesis_small)
    errors_large = _plain_edit_distance(trace.reference, trace.hypothesis_large)
    return {
        "confidence": math.exp(log_likelihood / length),
        "entropy": entropy,
        "mi": max(0.0, mutual_information / length),
        "aleatoric": expected / length,
        "errors_small": float(errors_small),
        "errors_large": float(errors_large),
        "wer_small": errors_small / length,
        "wer_large": errors_large / length,
    }
