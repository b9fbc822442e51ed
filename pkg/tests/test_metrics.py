"""Test suite for the evaluation metrics in metrics.py."""
import functools
import itertools

import numpy as np
import pytest

from napkit.metrics import (
    WerOutcome,
    auroc,
    corpus_wer,
    edit_distance,
    pearson_exact,
    spearman_exact,
    wer,
)


@functools.lru_cache(maxsize=None)
def _levenshtein(a, b):
    """Plain recursive edit distance over tuples."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(
        _levenshtein(a[1:], b) + 1,
        _levenshtein(a, b[1:]) + 1,
        _levenshtein(a[1:], b[1:]) + (a[0] != b[0]),
    )


@pytest.mark.parametrize(
    "a,b,expected",
    [
        ([1, 2, 3], [10, 20, 30], 1.0),
        ([1, 2, 3], [3, 2, 1], -1.0),
        ([1, 2, 3, 4], [1, 4, 9, 16], 1.0),
        ([1, 1, 2], [1, 2, 3], np.sqrt(3) / 2),
    ],
    ids=["same_order", "reversed", "monotone", "ties"],
)
def test_spearman_exact(a, b, expected):
    assert spearman_exact(a, b) == pytest.approx(expected, abs=1e-12)


def test_pearson_exact():
    assert pearson_exact([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-12)
    assert pearson_exact([1, 2, 3], [1, 2, 3]) <= 1.0
    assert pearson_exact([1, 2, 3, 4], [1, 4, 9, 16]) < 1.0


@pytest.mark.parametrize(
    "function,a,b,message",
    [
        (spearman_exact, [1, 1, 1], [1, 2, 3], "zero rank variance"),
        (pearson_exact, [1, 2, 3], [5, 5, 5], "zero variance"),
        (spearman_exact, [1, 2], [1, 2, 3], "equal length"),
        (pearson_exact, [1], [2], "at least 2"),
        (spearman_exact, [1, np.inf], [1, 2], "non-finite"),
    ],
    ids=["constant_ranks", "constant_values", "length_mismatch", "single_item", "infinite"],
)
def test_correlations_reject_invalid_input(function, a, b, message):
    with pytest.raises(ValueError, match=message):
        function(a, b)


@pytest.mark.parametrize(
    "negative,positive,expected",
    [
        ([0, 0, 0], [1, 1], 1.0),
        ([1, 1], [0, 0, 0], 0.0),
        ([3, 1, 2], [3, 1, 2], 0.5),
        ([1, 2], [1.5], 0.5),
        ([1, 2, 3, 4], [2.5, 5], 0.75),
    ],
    ids=["separated", "reversed", "identical", "between", "partial"],
)
def test_auroc_examples(negative, positive, expected):
    assert auroc(negative, positive) == expected


def test_auroc_matches_pairwise_count(rng):
    for _ in range(200):
        # given
        negative = rng.integers(0, 5, size=int(rng.integers(1, 15)))
        positive = rng.integers(0, 5, size=int(rng.integers(1, 15)))
        # when
        result = auroc(negative, positive)
        # then
        doubled = sum(2 * (p > n) + (p == n) for p, n in itertools.product(positive, negative))
        assert result == doubled / (2 * positive.size * negative.size)


def test_auroc_complement(rng):
    for _ in range(100):
        # given
        a, b = rng.standard_normal(int(rng.integers(1, 20))), rng.standard_normal(7)
        # then
        assert auroc(a, b) + auroc(b, a) == pytest.approx(1.0, abs=1e-12)


def test_auroc_is_invariant_to_monotone_transforms(rng):
    # given
    negative, positive = rng.standard_normal(30), rng.standard_normal(20) + 0.5
    # then
    assert auroc(np.exp(negative), np.exp(positive)) == auroc(negative, positive)
    assert auroc(3 * negative - 1, 3 * positive - 1) == auroc(negative, positive)


def test_auroc_rejects_empty_side():
    with pytest.raises(ValueError, match="non-empty"):
        auroc([], [1.0])
    with pytest.raises(ValueError, match="non-empty"):
        auroc([1.0], [])


@pytest.mark.parametrize(
    "ref,hyp,errors",
    [
        ("abc", "abc", 0),
        ("abc", "axcd", 2),
        ("abc", "", 3),
        ("ab", "ba", 2),
        ("kitten", "sitting", 3),
    ],
    ids=["identical", "substitution_and_insertion", "empty_hypothesis", "swap", "classic"],
)
def test_wer_examples(ref, hyp, errors):
    # when
    outcome = wer(list(ref), list(hyp))
    # then
    assert outcome.errors == errors
    assert outcome.ref_len == len(ref)
    assert outcome.wer == errors / len(ref)


def test_wer_rejects_empty_reference():
    with pytest.raises(ValueError, match="empty reference"):
        wer([], ["a"])


def _all_sequences(max_length, alphabet="abc"):
    for length in range(max_length + 1):
        yield from itertools.product(alphabet, repeat=length)


def test_edit_distance_matches_recursive_definition():
    for ref, hyp in itertools.product(_all_sequences(3), repeat=2):
        assert edit_distance(ref, hyp) == _levenshtein(ref, hyp)


@pytest.mark.slow
def test_edit_distance_matches_recursive_definition_up_to_length_six():
    for ref, hyp in itertools.product(_all_sequences(6), repeat=2):
        assert edit_distance(ref, hyp) == _levenshtein(ref, hyp)


def test_edit_distance_is_a_metric(rng):
    for _ in range(200):
        # given
        a, b, c = (list(rng.integers(0, 3, size=int(rng.integers(0, 8)))) for _ in range(3))
        # then
        assert edit_distance(a, b) == edit_distance(b, a)
        assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)
        assert (edit_distance(a, b) == 0) == (a == b)


@pytest.mark.parametrize(
    "outcomes,expected",
    [
        ([(1, 4)], 0.25),
        ([(1, 5), (1, 6)], 2 / 11),
        ([(0, 3), (0, 9)], 0.0),
    ],
    ids=["single", "pooled", "perfect"],
)
def test_corpus_wer_examples(outcomes, expected):
    # given
    outcomes = [WerOutcome(errors, ref_len, errors / ref_len) for errors, ref_len in outcomes]
    # then
    assert corpus_wer(outcomes) == expected


def test_corpus_wer_weights_by_reference_length(rng):
    for _ in range(50):
        # given
        refs = [list(rng.integers(0, 4, size=int(rng.integers(1, 10)))) for _ in range(8)]
        hyps = [list(rng.integers(0, 4, size=int(rng.integers(0, 10)))) for _ in range(8)]
        outcomes = [wer(r, h) for r, h in zip(refs, hyps)]
        # then
        expected = sum(edit_distance(r, h) for r, h in zip(refs, hyps)) / sum(map(len, refs))
        assert corpus_wer(outcomes) == pytest.approx(expected, abs=1e-15)


def test_corpus_wer_rejects_empty_corpus():
    with pytest.raises(ValueError):
        corpus_wer([])


def test_wer_outcome_rejects_invalid_counts():
    with pytest.raises(ValueError):
        WerOutcome(errors=1, ref_len=0, wer=0.0)
    with pytest.raises(ValueError):
        WerOutcome(errors=-1, ref_len=2, wer=0.0)
