"""Downstream evaluations of proxy scores.

* OOD detection: AUROC of the scores with the OOD set as the positive class.
* Filtering: aggregate quality of what remains after removing the examples
  at one extreme of the predicted score.
* Deferral: route each example to a small or a large model by thresholding
  a score, and trace the quality/cost operating curve.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .constants import (
    AGGREGATE_MODES,
    DEFER_DIRECTIONS,
    DEFER_POLICIES,
    FILTER_DIRECTIONS,
    OOD_DIRECTIONS,
    filter_curve_schema,
    operating_curve_schema,
)
from .metrics import auroc


def _check_choice(name, value, choices):
    if value not in choices:
        raise ValueError(f"Unknown {name} {value!r}. Valid values: {choices}")


def ood_detect(id_scores, ood_scores, direction: str = "higher_is_ood") -> float:
    """AUROC in percent, OOD examples being the positives.

    ``lower_is_ood`` negates the scores first, for confidence-like proxies.
    """
    _check_choice("direction", direction, OOD_DIRECTIONS)
    id_scores = np.asarray(id_scores, dtype=np.float64)
    ood_scores = np.asarray(ood_scores, dtype=np.float64)
    if direction == "lower_is_ood":
        id_scores, ood_scores = -id_scores, -ood_scores
    return 100.0 * auroc(id_scores, ood_scores)


def filtering_curve(predicted, actual_metric, fractions: Sequence[float],
                    direction: str = "remove_lowest_predicted",
                    mode: str = "mean_metric",
                    ref_lens=None) -> pd.DataFrame:
    """Aggregate metric of the remainder for each removed fraction.

    In ``corpus_wer`` mode ``actual_metric`` holds error counts and
    ``ref_lens`` the reference lengths; the remainder is pooled.
    Ties in ``predicted`` are removed in input order.

    Returns
    -------
    pd.DataFrame
        Columns ``fraction_removed`` and ``metric``.
    """
    _check_choice("direction", direction, FILTER_DIRECTIONS)
    _check_choice("mode", mode, AGGREGATE_MODES)
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual_metric, dtype=np.float64)
    if predicted.shape != actual.shape or predicted.ndim != 1:
        raise ValueError("predicted and actual_metric must be vectors of equal length")
    n = predicted.size
    if n == 0:
        raise ValueError("filtering needs at least one example")
    if mode == "corpus_wer":
        if ref_lens is None:
            raise ValueError("corpus_wer mode needs reference lengths")
        ref_lens = np.asarray(ref_lens, dtype=np.float64)
    fractions = [float(f) for f in fractions]
    if not fractions or fractions[0] != 0.0 or any(
            b < a for a, b in zip(fractions, fractions[1:])):
        raise ValueError("fractions must be sorted ascending and start at 0")

    ordering = predicted if direction == "remove_lowest_predicted" else -predicted
    removal_order = np.argsort(ordering, kind="stable")
    rows = []
    for fraction in fractions:
        n_removed = int(math.floor(fraction * n + 1e-9))
        if n_removed >= n:
            raise ValueError("empty remainder")
        keep = np.ones(n, dtype=bool)
        keep[removal_order[:n_removed]] = False
        if mode == "corpus_wer":
            metric = actual[keep].sum() / ref_lens[keep].sum()
        else:
            metric = actual[keep].mean()
        rows.append({"fraction_removed": fraction, "metric": float(metric)})
    return filter_curve_schema.validate(pd.DataFrame(rows))


@dataclass
class DeferralInput:
    """Everything the deferral evaluation needs about one example.

    ``errors_*`` and ``ref_len`` are only required in ``corpus_wer`` mode.
    """
    proxy_score: float
    metric_small: float
    metric_large: float
    time_small: float
    time_large: float
    time_proxy: float = 0.0
    errors_small: Optional[float] = None
    errors_large: Optional[float] = None
    ref_len: Optional[float] = None

    def __post_init__(self):
        if min(self.time_small, self.time_large, self.time_proxy) < 0:
            raise ValueError("times must be non-negative")
        if self.ref_len is not None and self.ref_len <= 0:
            raise ValueError("ref_len must be positive")


def default_thresholds(scores) -> List[float]:
    """All distinct scores, between -inf and +inf sentinels."""
    return [-math.inf] + sorted(set(float(s) for s in scores)) + [math.inf]


def deferral_curve(inputs: List[DeferralInput], policy: str = "proxy",
                   direction: str = "above_threshold_small",
                   mode: str = "mean_metric",
                   thresholds: Optional[Sequence[float]] = None) -> pd.DataFrame:
    """Operating curve of small/large routing by thresholding the score.

    ``above_threshold_small`` sends examples scoring above the threshold to
    the small model, ``below_threshold_small`` those scoring below. All other
    examples are deferred to the large model. Times are summed over examples:
    the proxy policy pays the proxy plus the selected model, the
    small_model_uncertainty policy always runs the small model and adds the
    large one on deferral.

    Returns
    -------
    pd.DataFrame
        Columns ``threshold``, ``fraction_deferred``, ``metric``, ``time``,
        ordered by increasing fraction deferred.
    """
    _check_choice("policy", policy, DEFER_POLICIES)
    _check_choice("direction", direction, DEFER_DIRECTIONS)
    _check_choice("mode", mode, AGGREGATE_MODES)
    if not inputs:
        raise ValueError("deferral needs at least one example")

    scores = np.array([x.proxy_score for x in inputs], dtype=np.float64)
    time_small = np.array([x.time_small for x in inputs], dtype=np.float64)
    time_large = np.array([x.time_large for x in inputs], dtype=np.float64)
    time_proxy = np.array([x.time_proxy for x in inputs], dtype=np.float64)
    if mode == "corpus_wer":
        if any(x.ref_len is None or x.errors_small is None or x.errors_large is None
               for x in inputs):
            raise ValueError("corpus_wer mode needs errors_small, errors_large and ref_len")
        small_values = np.array([x.errors_small for x in inputs], dtype=np.float64)
        large_values = np.array([x.errors_large for x in inputs], dtype=np.float64)
        ref_words = np.sum([x.ref_len for x in inputs])
    else:
        small_values = np.array([x.metric_small for x in inputs], dtype=np.float64)
        large_values = np.array([x.metric_large for x in inputs], dtype=np.float64)

    if thresholds is None:
        thresholds = default_thresholds(scores)
    thresholds = sorted(float(t) for t in thresholds)
    if direction == "below_threshold_small":
        thresholds = thresholds[::-1]

    rows = []
    for threshold in thresholds:
        if direction == "above_threshold_small":
            to_small = scores > threshold
        else:
            to_small = scores < threshold
        selected = np.where(to_small, small_values, large_values)
        if mode == "corpus_wer":
            metric = selected.sum() / ref_words
        else:
            metric = selected.mean()
        if policy == "proxy":
            time = np.sum(time_proxy + np.where(to_small, time_small, time_large))
        else:
            time = np.sum(time_small + np.where(to_small, 0.0, time_large))
        rows.append({
            "threshold": threshold,
            "fraction_deferred": float(np.mean(~to_small)),
            "metric": float(metric),
            "time": float(time),
        })
    logging.debug("Deferral curve with %s points over %s examples", len(rows), len(inputs))
    return operating_curve_schema.validate(pd.DataFrame(rows))


def matched_operating_point(curve: pd.DataFrame, time: Optional[float] = None,
                            metric: Optional[float] = None) -> Tuple[float, float, float]:
    """Read the curve at a target time or a target metric.

    Interpolates linearly on the first pair of adjacent points that brackets
    the target. An exact hit returns that point unchanged. An infinite
    threshold is not interpolated; the nearer point's threshold is used.

    Returns
    -------
    tuple[float, float, float]
        ``(threshold, metric, time)``
    """
    if (time is None) == (metric is None):
        raise ValueError("give exactly one of a target time or a target metric")
    axis, target = ("time", time) if time is not None else ("metric", metric)
    points = curve[["threshold", "metric", "time"]].to_numpy(dtype=np.float64)
    column = {"threshold": 0, "metric": 1, "time": 2}[axis]
    for point in points:
        if point[column] == target:
            return float(point[0]), float(point[1]), float(point[2])
    for start, stop in zip(points, points[1:]):
        low, high = sorted((start[column], stop[column]))
        if not low <= target <= high or low == high:
            continue
        weight = (target - start[column]) / (stop[column] - start[column])
        with np.errstate(invalid="ignore"):
            interpolated = start + weight * (stop - start)
        threshold = interpolated[0]
        if not math.isfinite(threshold):
            threshold = start[0] if weight < 0.5 else stop[0]
        interpolated[column] = target
        return float(threshold), float(interpolated[1]), float(interpolated[2])
    raise ValueError("unreachable operating point")
