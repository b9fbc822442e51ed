"""Test suite for the soft rank projection in softrank.py."""
import numpy as np
import pytest
from scipy.stats import rankdata

from napkit.softrank import (
    SoftRankOutput,
    pav_blocks,
    pav_isotonic,
    soft_rank,
    soft_rank_vjp,
)
from conftest import central_difference, relative_error, same_rank_pattern


@pytest.mark.parametrize(
    "y,expected",
    [
        ([3, 1, 2], [3, 1.5, 1.5]),
        ([5, 4, 1], [5, 4, 1]),
        ([1, 1, 1], [1, 1, 1]),
    ],
    ids=["one_violation", "already_non_increasing", "constant"],
)
def test_pav_isotonic(y, expected):
    # when
    result = pav_isotonic(y)
    # then
    np.testing.assert_allclose(result, expected, rtol=0, atol=1e-12)


@pytest.mark.parametrize(
    "y,expected_blocks",
    [
        ([3, 1, 2], [(0, 1), (1, 3)]),
        ([1, 2, 3], [(0, 3)]),
        ([4, 1, 2, 3, 0], [(0, 1), (1, 4), (4, 5)]),
    ],
    ids=["one_violation", "fully_pooled", "pool_in_the_middle"],
)
def test_pav_blocks_merges_violating_pools(y, expected_blocks):
    # when
    solution, blocks = pav_blocks(y)
    # then
    assert blocks == expected_blocks
    for start, stop in blocks:
        np.testing.assert_allclose(solution[start:stop], np.mean(y[start:stop]), atol=1e-12)


def test_pav_blocks_are_means_of_their_pools(rng):
    # given
    y = rng.standard_normal(30)
    # when
    solution, blocks = pav_blocks(y)
    # then
    assert blocks[0][0] == 0 and blocks[-1][1] == y.size
    for (start, stop), (next_start, _) in zip(blocks, blocks[1:]):
        assert stop == next_start
    for start, stop in blocks:
        np.testing.assert_allclose(solution[start:stop], y[start:stop].mean(), atol=1e-12)
    assert np.all(np.diff(solution) <= 1e-12)


def test_pav_isotonic_is_idempotent(rng):
    for _ in range(20):
        # given
        fitted = pav_isotonic(rng.standard_normal(int(rng.integers(1, 40))))
        # when
        refitted = pav_isotonic(fitted)
        # then
        np.testing.assert_allclose(refitted, fitted, rtol=0, atol=1e-12)


def test_pav_isotonic_raises_on_non_finite():
    with pytest.raises(ValueError, match="non-finite input"):
        pav_isotonic([1.0, np.nan, 2.0])


@pytest.mark.parametrize(
    "scores,epsilon,expected",
    [
        ([10, 20, 30], 1e-6, [1, 2, 3]),
        ([7, 7], 1e-6, [1.5, 1.5]),
        ([7, 7], 10.0, [1.5, 1.5]),
        ([2, 1], 1e9, [1.5, 1.5]),
    ],
    ids=["separated", "tied", "tied_large_epsilon", "centroid_limit"],
)
def test_soft_rank_examples(scores, epsilon, expected):
    # when
    result = soft_rank(scores, epsilon)
    # then
    np.testing.assert_allclose(result.ranks, expected, rtol=0, atol=1e-6)


def test_soft_rank_raises_on_single_item():
    with pytest.raises(ValueError, match="batch too small for ranking"):
        soft_rank([1.0])


def test_soft_rank_hard_rank_limit(rng):
    for _ in range(1000):
        # given
        n = int(rng.integers(2, 65))
        scores = rng.permutation(n) * 0.01 + rng.uniform(0, 0.001, size=n)
        # when
        result = soft_rank(scores, epsilon=1e-6)
        # then
        np.testing.assert_allclose(result.ranks, rankdata(scores), rtol=0, atol=1e-4)
        total = n * (n + 1) / 2
        assert abs(result.ranks.sum() - total) <= 1e-9 * total


def test_soft_rank_invariants(rng):
    for _ in range(100):
        # given
        n = int(rng.integers(2, 33))
        scores = rng.standard_normal(n)
        epsilon = float(rng.choice([1e-3, 0.1, 1.0, 10.0]))
        # when
        ranks = soft_rank(scores, epsilon).ranks
        # then
        assert np.all(ranks >= 1 - 1e-9) and np.all(ranks <= n + 1e-9)
        total = n * (n + 1) / 2
        assert abs(ranks.sum() - total) <= 1e-9 * total
        order = np.argsort(scores)
        assert np.all(np.diff(ranks[order]) >= -1e-9)


def test_soft_rank_translation_invariance(rng):
    # given
    scores = rng.standard_normal(12)
    # when
    shifted = soft_rank(scores + 3.0, 0.1).ranks
    # then
    np.testing.assert_allclose(shifted, soft_rank(scores, 0.1).ranks, rtol=0, atol=1e-9)


def test_soft_rank_scaling_equals_epsilon_change(rng):
    # given
    scores = rng.standard_normal(12)
    a = 2.5
    # when
    scaled = soft_rank(a * scores, 0.5).ranks
    # then
    np.testing.assert_allclose(scaled, soft_rank(scores, 0.5 / a).ranks, rtol=0, atol=1e-9)


def test_soft_rank_vjp_single_block():
    # given
    upstream = np.array([1.0, 4.0, -2.0, 5.0])
    output = SoftRankOutput(ranks=np.full(4, 2.5), blocks=[(0, 4)],
                            sort_perm=np.array([2, 0, 3, 1]), epsilon=2.0)
    # when
    result = soft_rank_vjp(output, upstream)
    # then
    np.testing.assert_allclose(result, np.full(4, upstream.mean() / 2.0), rtol=1e-15)


def test_soft_rank_vjp_singleton_blocks():
    # given
    output = soft_rank([10.0, 20.0, 30.0], epsilon=1e-6)
    # when
    result = soft_rank_vjp(output, np.array([1.0, -3.0, 2.0]))
    # then
    assert output.blocks == [(0, 1), (1, 2), (2, 3)]
    np.testing.assert_allclose(result, np.array([1.0, -3.0, 2.0]) / 1e-6, rtol=1e-15)


def test_soft_rank_vjp_raises_on_length_mismatch():
    output = soft_rank([1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        soft_rank_vjp(output, np.ones(2))


def test_soft_rank_vjp_pools_tied_scores():
    # given
    output = soft_rank([7.0, 1.0, 7.0], epsilon=1e-6)
    # when
    result = soft_rank_vjp(output, np.array([2.0, 5.0, 4.0]))
    # then
    np.testing.assert_allclose(result, np.array([3.0, 5.0, 3.0]) / 1e-6, rtol=1e-12)


def _isotonic_step(scores, epsilon):
    """The fitted pool values of the soft rank projection, in input order."""
    return np.asarray(scores) / epsilon - soft_rank(scores, epsilon).ranks


def test_soft_rank_vjp_matches_finite_differences_of_the_isotonic_step(rng):
    for _ in range(100):
        # given
        n = int(rng.integers(2, 33))
        scores = rng.standard_normal(n)
        upstream = rng.standard_normal(n)
        epsilon = 1.0
        # when
        analytic = soft_rank_vjp(soft_rank(scores, epsilon), upstream)
        numeric = central_difference(
            lambda s: float(upstream @ _isotonic_step(s, epsilon)), scores,
            same_piece=same_rank_pattern(epsilon))
        # then
        assert relative_error(analytic, numeric) < 1e-5


def test_soft_rank_vjp_of_pooled_scores_is_nonzero(rng):
    # given
    scores = rng.standard_normal(8) * 1e-3
    output = soft_rank(scores, epsilon=1.0)
    upstream = np.arange(8, dtype=np.float64)
    # when
    result = soft_rank_vjp(output, upstream)
    # then
    assert output.blocks == [(0, 8)]
    np.testing.assert_allclose(result, np.full(8, 3.5), rtol=1e-12)
