"""Constant values used by napkit.

* Names of loss kinds, head variants, poolings, targets and task directions.
* Validation schemas for the configurable corpus specs, teacher specs and
  score records.
* DataFrame schemas for the CSV outputs (curves, training history).
"""
import math

from pandera import Column, DataFrameSchema, Check
from schema import Schema, And, Or, Optional, Use

LOSS_KINDS = ["scc", "pcc", "mae", "rmse", "ep_al"]
CORRELATION_LOSSES = ["scc", "pcc", "ep_al"]
RANK_LOSSES = ["scc", "ep_al"]
MIN_CORRELATION_BATCH = 8

VARIANTS_2L = ["2L-Tanh", "2L-SM", "2L-LN-Exp", "2L-LN-Tanh"]
VARIANTS_3L = ["3L-ReLU", "3L-Tanh", "3L-LN-Exp", "3L-LN-Tanh", "3L-SM"]
VARIANTS = VARIANTS_2L + VARIANTS_3L
POOLINGS = ["average", "attentive"]

SPLITS = ["train", "validation", "test"]

UNCERTAINTY_TARGETS = ["confidence", "entropy", "mi", "aleatoric"]
QUALITY_TARGETS = [
    "similarity", "wer", "errors", "ref_len",
    "similarity_small", "similarity_large",
    "wer_small", "wer_large",
    "errors_small", "errors_large",
]
TARGET_NAMES = UNCERTAINTY_TARGETS + QUALITY_TARGETS
DERIVED_TARGETS = {
    "similarity_diff": ("similarity_large", "similarity_small"),
    "wer_diff": ("wer_large", "wer_small"),
    "errors_diff": ("errors_large", "errors_small"),
}
"""Difference targets, computed as large minus small."""

TIME_NAMES = ["small", "large", "proxy"]

OOD_DIRECTIONS = ["higher_is_ood", "lower_is_ood"]
FILTER_DIRECTIONS = ["remove_lowest_predicted", "remove_highest_predicted"]
DEFER_DIRECTIONS = ["above_threshold_small", "below_threshold_small"]
DEFER_POLICIES = ["proxy", "small_model_uncertainty"]
AGGREGATE_MODES = ["mean_metric", "corpus_wer"]

PROB_FLOOR = 1e-12
LAYER_NORM_EPS = 1e-5
GREEDY_TEMPERATURE = 1e-6
"""Decoding temperatures at or below this value decode greedily."""

HEAD_FORMAT = "napkit-head"
HEAD_FORMAT_VERSION = 1

HISTORY_FILE_SUFFIX = ".history.csv"
RECORD_SUFFIX = ".jsonl"


def _is_finite(value):
    return math.isfinite(value)


def _is_distribution(values):
    return (
        len(values) >= 2
        and all(v >= 0 for v in values)
        and abs(sum(values) - 1.0) < 1e-6
    )


def _valid_splits(splits):
    return set(splits) <= set(SPLITS) and abs(sum(splits.values()) - 1.0) < 1e-9


# Define validation Schemas
number = Or(int, float)
positive = And(number, lambda x: x > 0 and _is_finite(x))
non_negative = And(number, lambda x: x >= 0 and _is_finite(x))

teacher_schema = Schema(
    {
        "vocab_size": And(int, lambda v: v >= 2),
        "temperature": positive,
        "seed": int,
        Optional("logit_scale", default=2.0): positive,
        Optional("train_unigram"): And([non_negative], _is_distribution),
    }
)

corpus_schema = Schema(
    {
        "name": And(str, len),
        "n_examples": And(int, lambda n: n >= 0),
        "length_range": And(
            [And(int, lambda n: n >= 2)],
            lambda r: len(r) == 2 and r[0] <= r[1]),
        "source_unigram": And([non_negative], _is_distribution),
        "domain": And(str, len),
        "temperature_small": non_negative,
        "temperature_large": non_negative,
        "ensemble_size": And(int, lambda k: k >= 2),
        "sigma": non_negative,
        "seed": int,
        Optional("temperature"): positive,
        Optional("splits", default={"test": 1.0}): And(
            {Or(*SPLITS): non_negative}, _valid_splits),
        Optional("encoder_depth", default=2): And(int, lambda n: n >= 1),
        Optional("feature_width", default=64): And(int, lambda n: n >= 1),
        Optional("encoder_seed", default=0): int,
        Optional("cost_small", default=1.0): non_negative,
        Optional("cost_large", default=4.0): non_negative,
        Optional("cost_proxy", default=0.05): non_negative,
    }
)

loss_schema = Schema(
    {
        "kind": Or(*LOSS_KINDS),
        Optional("epsilon", default=1e-6): positive,
        Optional("alpha", default=0.0): non_negative,
        Optional("decorrelate_field", default="aleatoric"): str,
    }
)

train_schema = Schema(
    {
        "loss": dict,
        "learning_rate": positive,
        "batch_size": And(int, lambda b: b >= 1),
        "max_epochs": And(int, lambda e: e >= 1),
        "evals_per_epoch": And(int, lambda e: e >= 1),
        Optional("patience_evals"): Or(None, And(int, lambda p: p >= 1)),
        "seed": int,
        "hidden_width": And(int, lambda h: h >= 1),
    }
)

record_schema = Schema(
    {
        "id": And(str, len),
        "split": Or(*SPLITS),
        "domain": str,
        "features": And(list, len),
        "targets": {Or(*TARGET_NAMES): And(Use(float), _is_finite)},
        "times": {Or(*TIME_NAMES): And(Use(float), lambda t: t >= 0)},
    }
)


def _non_decreasing(series):
    return bool((series.diff().dropna() >= 0).all())


filter_curve_schema = DataFrameSchema(
    {
        "fraction_removed": Column(
            float, [Check.in_range(0.0, 1.0, include_max=False),
                    Check(_non_decreasing, element_wise=False)]),
        "metric": Column(float),
    }
)

operating_curve_schema = DataFrameSchema(
    {
        "threshold": Column(float),
        "fraction_deferred": Column(
            float, [Check.in_range(0.0, 1.0),
                    Check(_non_decreasing, element_wise=False)]),
        "metric": Column(float),
        "time": Column(float, Check.ge(0.0)),
    }
)

history_schema = DataFrameSchema(
    {
        "step": Column(int, Check.ge(0)),
        "validation_spearman": Column(float),
    }
)

detection_schema = DataFrameSchema(
    {
        "id_records": Column(str),
        "ood_records": Column(str),
        "direction": Column(str, Check.isin(OOD_DIRECTIONS)),
        "auroc": Column(float, Check.in_range(0.0, 100.0)),
    }
)
