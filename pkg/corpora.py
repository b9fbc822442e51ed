"""Corpus config for `napkit gen corpora.py`.

An in-domain corpus drawn from the teacher's training unigram, and an
out-of-domain corpus drawn from a shifted unigram at a higher temperature.
"""

VOCAB_SIZE = 16

_id_unigram = [0.15, 0.12, 0.11, 0.10, 0.09, 0.08, 0.07, 0.06,
               0.05, 0.04, 0.04, 0.03, 0.02, 0.02, 0.015, 0.005]
_ood_unigram = list(reversed(_id_unigram))

teacher = {
    "vocab_size": VOCAB_SIZE,
    "temperature": 1.0,
    "seed": 0,
    "logit_scale": 2.0,
    "train_unigram": _id_unigram,
}

_shared = {
    "length_range": [4, 24],
    "temperature_small": 1.0,
    "temperature_large": 0.3,
    "ensemble_size": 5,
    "sigma": 0.5,
    "encoder_depth": 2,
    "feature_width": 64,
    "encoder_seed": 0,
}

corpora = [
    dict(
        _shared,
        name="id",
        n_examples=5000,
        source_unigram=_id_unigram,
        domain="id",
        seed=1,
        splits={"train": 0.8, "validation": 0.1, "test": 0.1},
    ),
    dict(
        _shared,
        name="ood",
        n_examples=500,
        source_unigram=_ood_unigram,
        domain="ood",
        seed=2,
        temperature=1.5,
    ),
]
