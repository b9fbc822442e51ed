"""Differentiable soft ranks.

The soft rank of a score vector is its Euclidean projection onto the
permutahedron of (1, 2, ..., n), after scaling by 1/epsilon. Sorting reduces
the projection to an isotonic regression, which pool-adjacent-violators
solves in linear time. Ranks are ascending: the smallest score gets the
smallest rank.
"""
import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np


@dataclass
class SoftRankOutput:
    """Soft ranks of a batch and what is needed to apply their Jacobian.

    Attributes
    ----------
    ranks: np.ndarray
        Soft ranks in input order, each in [1, n].
    blocks: list[tuple[int, int]]
        Half-open ``(start, stop)`` index ranges of the PAV pools,
        in sorted (descending score) order.
    sort_perm: np.ndarray
        Indices that sort the scores in descending order.
    epsilon: float
        Regularization strength the ranks were computed with.
    """
    ranks: np.ndarray
    blocks: List[Tuple[int, int]]
    sort_perm: np.ndarray
    epsilon: float

    @property
    def size(self):
        return len(self.ranks)


def _check_finite(values: np.ndarray):
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite input")


def pav_blocks(y) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    """Fit a non-increasing sequence to ``y`` by least squares.

    Returns the fitted values and the pooled blocks as half-open index ranges.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("expected a non-empty vector")
    _check_finite(y)

    # Each pool is (start, stop, sum); its value is sum / (stop - start).
    starts: List[int] = []
    stops: List[int] = []
    sums: List[float] = []
    for i, value in enumerate(y):
        starts.append(i)
        stops.append(i + 1)
        sums.append(float(value))
        while len(sums) > 1 and (
                sums[-2] / (stops[-2] - starts[-2])
                <= sums[-1] / (stops[-1] - starts[-1])):
            last_sum, last_stop = sums.pop(), stops.pop()
            starts.pop()
            sums[-1] += last_sum
            stops[-1] = last_stop

    solution = np.empty_like(y)
    blocks = []
    for start, stop, total in zip(starts, stops, sums):
        solution[start:stop] = total / (stop - start)
        blocks.append((start, stop))
    return solution, blocks


def pav_isotonic(y) -> np.ndarray:
    """Least squares non-increasing fit of ``y``, piecewise constant over the pools."""
    solution, _ = pav_blocks(y)
    return solution


def soft_rank(scores, epsilon: float = 1e-6) -> SoftRankOutput:
    """Compute the soft ascending ranks of ``scores``.

    Parameters
    ----------
    scores: array-like
        One score per item in the batch.
    epsilon: float
        Regularization strength. Small values approach the hard ranks,
        large values collapse towards the centroid (n + 1) / 2.

    Returns
    -------
    SoftRankOutput
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    if n < 2:
        raise ValueError("batch too small for ranking")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    _check_finite(scores)

    values = scores / epsilon
    sort_perm = np.argsort(-values, kind="stable")
    sorted_values = values[sort_perm]
    w = np.arange(n, 0, -1, dtype=np.float64)
    dual, blocks = pav_blocks(sorted_values - w)
    primal = sorted_values - dual

    ranks = np.empty(n, dtype=np.float64)
    ranks[sort_perm] = primal
    logging.debug("Soft rank of %s items pooled into %s blocks", n, len(blocks))
    return SoftRankOutput(ranks=ranks, blocks=blocks, sort_perm=sort_perm,
                          epsilon=float(epsilon))


def soft_rank_vjp(output: SoftRankOutput, upstream) -> np.ndarray:
    """Pass ``upstream`` back through the isotonic step of the soft ranks.

    Every member of a pool receives the mean of the pool's upstream, scaled by
    1/epsilon. A singleton pool passes its upstream through as upstream / epsilon.
    Separate pools do not interact.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (output.size,):
        raise ValueError(
            f"upstream has shape {upstream.shape}, expected ({output.size},)")
    sorted_upstream = upstream[output.sort_perm]
    sorted_grad = np.empty_like(sorted_upstream)
    for start, stop in output.blocks:
        block = sorted_upstream[start:stop]
        sorted_grad[start:stop] = block.mean()
    grad = np.empty_like(sorted_grad)
    grad[output.sort_perm] = sorted_grad / output.epsilon
    return grad
