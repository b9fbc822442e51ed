"""Configuration values for the unit tests."""

from pathlib import Path

import numpy as np
import pytest

from napkit.naphead import FeatureSequence
from napkit.records import ScoreRecord, write_records
from napkit.softrank import soft_rank
from napkit.synthkit import CorpusSpec, TeacherSpec

TESTS_DIR = Path(__file__).parent


def make_records(n, width=4, seed=0, split="train", domain="id", length_range=(2, 6)):
    """Random records whose mi target is a noisy function of the features."""
    rng = np.random.default_rng(seed)
    direction = np.linspace(-1.0, 1.0, width)
    records = []
    for i in range(n):
        length = int(rng.integers(length_range[0], length_range[1] + 1))
        features = rng.standard_normal((length, width))
        signal = float(features.mean(axis=0) @ direction)
        records.append(ScoreRecord(
            id=f"{split}-{seed}-{i}",
            split=split,
            domain=domain,
            features=features,
            targets={
                "mi": signal + 0.1 * float(rng.standard_normal()),
                "aleatoric": float(rng.random()),
                "similarity_small": float(rng.random()),
                "similarity_large": float(rng.random()),
            },
            times={"small": 1.0, "large": 4.0, "proxy": 0.1},
        ))
    return records


def central_difference(f, x, step=1e-6, same_piece=None):
    """Numerical gradient of the scalar function ``f`` at the vector ``x``.

    For piecewise functions, ``same_piece(a, b)`` tells whether two points lie
    on the same piece; coordinates whose step crosses a piece boundary are NaN.
    """
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        up, down = x.copy(), x.copy()
        up.flat[i] += step
        down.flat[i] -= step
        if same_piece is not None and not (same_piece(x, up) and same_piece(x, down)):
            grad.flat[i] = np.nan
            continue
        grad.flat[i] = (f(up) - f(down)) / (2 * step)
    return grad


def same_rank_pattern(epsilon):
    """Whether two score vectors share the sort order and pooling of their soft ranks."""
    def same_piece(a, b):
        out_a, out_b = soft_rank(a, epsilon), soft_rank(b, epsilon)
        return (np.array_equal(out_a.sort_perm, out_b.sort_perm)
                and out_a.blocks == out_b.blocks)
    return same_piece


def relative_error(analytic, numeric):
    """Norm of the difference over the larger norm, ignoring NaN coordinates of ``numeric``."""
    numeric = np.asarray(numeric, dtype=np.float64)
    kept = ~np.isnan(numeric)
    analytic = np.asarray(analytic, dtype=np.float64)[kept]
    numeric = numeric[kept]
    scale = max(np.linalg.norm(numeric), np.linalg.norm(analytic), 1e-3)
    return np.linalg.norm(analytic - numeric) / scale


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture(scope="session")
def train_validation_records():
    """Small random corpus with train and validation splits."""
    return make_records(96, seed=1, split="train") + make_records(32, seed=2, split="validation")


@pytest.fixture
def feature_sequence():
    """Three positions of width two, the last one masked out."""
    return FeatureSequence(
        features=np.array([[1.0, 2.0], [3.0, -1.0], [100.0, 100.0]]),
        mask=np.array([True, True, False]),
    )


@pytest.fixture(scope="session")
def tiny_teacher():
    return TeacherSpec(vocab_size=6, temperature=1.0, seed=3,
                       train_unigram=[0.3, 0.3, 0.2, 0.1, 0.05, 0.05])


@pytest.fixture
def tiny_corpus_dict():
    """Corpus config dict with a small vocabulary and narrow features."""
    return {
        "name": "tiny",
        "n_examples": 20,
        "length_range": [2, 6],
        "source_unigram": [0.3, 0.3, 0.2, 0.1, 0.05, 0.05],
        "domain": "id",
        "temperature_small": 1.0,
        "temperature_large": 0.0,
        "ensemble_size": 3,
        "sigma": 0.5,
        "seed": 5,
        "splits": {"train": 0.5, "validation": 0.25, "test": 0.25},
        "feature_width": 8,
        "encoder_depth": 2,
    }


@pytest.fixture
def tiny_corpus_spec(tiny_corpus_dict):
    return CorpusSpec.from_dict(tiny_corpus_dict)


@pytest.fixture(scope="session")
def simple_example_path():
    """Two records with small/large model similarities of (0.70, 0.90) and (0.50, 0.40)."""
    return TESTS_DIR / "dummy_simple_example.jsonl"


@pytest.fixture(scope="session")
def dummy_corpora_path():
    return TESTS_DIR / "dummy_corpora.py"


@pytest.fixture
def records_file(tmp_path, train_validation_records):
    """The random train/validation corpus written to JSONL."""
    path = tmp_path / "records.jsonl"
    write_records(path, train_validation_records)
    return path
