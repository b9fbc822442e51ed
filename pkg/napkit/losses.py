"""Batch losses with closed-form gradients.

Every loss takes one batch of predictions and teacher targets and returns
``(value, grad_pred)``. Targets are constants, no gradient flows through them.
"""
import logging
from dataclasses import dataclass, asdict
from typing import Dict, Tuple

import numpy as np
from scipy.stats import rankdata

from .constants import (
    CORRELATION_LOSSES,
    MIN_CORRELATION_BATCH,
    RANK_LOSSES,
    loss_schema,
)
from .softrank import soft_rank, soft_rank_vjp

LossResult = Tuple[float, np.ndarray]


@dataclass
class LossSpec:
    """Which loss to train with, and its hyperparameters.

    ``epsilon`` is the soft rank smoothing used by scc and ep_al,
    ``alpha`` the decorrelation weight of ep_al, and ``decorrelate_field``
    the target that ep_al decorrelates the predictions from.
    """
    kind: str
    epsilon: float = 1e-6
    alpha: float = 0.0
    decorrelate_field: str = "aleatoric"

    def __post_init__(self):
        loss_schema.validate(self.to_dict())

    @classmethod
    def from_dict(cls, loss_dict: dict):
        return cls(**loss_schema.validate(loss_dict))

    def to_dict(self) -> Dict:
        return asdict(self)

    @property
    def is_correlation(self):
        return self.kind in CORRELATION_LOSSES

    @property
    def uses_ranks(self):
        return self.kind in RANK_LOSSES


def _as_pair(pred, target, min_size=1):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.ndim != 1 or pred.shape != target.shape:
        raise ValueError(
            f"pred and target must be vectors of equal length, "
            f"got {pred.shape} and {target.shape}")
    if pred.size < min_size:
        raise ValueError(f"need at least {min_size} items, got {pred.size}")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(target))):
        raise ValueError("non-finite input")
    return pred, target


def spearman_loss(pred, target, epsilon: float = 1e-6) -> LossResult:
    """Negated Spearman correlation between soft ranks of ``pred`` and midranks of ``target``."""
    pred, target = _as_pair(pred, target, min_size=2)
    n = pred.size
    target_ranks = rankdata(target, method="average")
    output = soft_rank(pred, epsilon)
    diff = target_ranks - output.ranks
    scale = 6.0 / (n * (n ** 2 - 1))
    value = -(1.0 - scale * np.sum(diff ** 2))
    grad_ranks = -2.0 * scale * diff
    return float(value), soft_rank_vjp(output, grad_ranks)


def pearson_loss(pred, target) -> LossResult:
    """Negated Pearson correlation between ``pred`` and ``target``."""
    pred, target = _as_pair(pred, target, min_size=2)
    pred_c = pred - pred.mean()
    target_c = target - target.mean()
    pred_norm = np.sqrt(np.sum(pred_c ** 2))
    target_norm = np.sqrt(np.sum(target_c ** 2))
    if pred_norm == 0 or target_norm == 0:
        raise ValueError("zero variance")
    corr = float(np.dot(pred_c, target_c) / (pred_norm * target_norm))
    corr = min(1.0, max(-1.0, corr))
    grad = target_c / (pred_norm * target_norm) - corr * pred_c / pred_norm ** 2
    return -corr, -grad


def mae_loss(pred, target) -> LossResult:
    """Mean absolute error. The subgradient at a zero residual is 0."""
    pred, target = _as_pair(pred, target)
    residual = pred - target
    return float(np.mean(np.abs(residual))), np.sign(residual) / pred.size


def rmse_loss(pred, target) -> LossResult:
    """Root mean squared error. At exactly zero loss the gradient is zero."""
    pred, target = _as_pair(pred, target)
    residual = pred - target
    value = float(np.sqrt(np.mean(residual ** 2)))
    if value == 0.0:
        return value, np.zeros_like(residual)
    return value, residual / (pred.size * value)


def decorrelation_loss(pred, epistemic, aleatoric, epsilon: float = 1e-6,
                       alpha: float = 0.0) -> LossResult:
    """Correlate with the epistemic target while decorrelating from the aleatoric one.

    value = scc(pred, epistemic) - alpha * |scc(pred, aleatoric)|
    """
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    value, grad = spearman_loss(pred, epistemic, epsilon)
    if alpha == 0:
        return value, grad
    al_value, al_grad = spearman_loss(pred, aleatoric, epsilon)
    sign = float(np.sign(al_value))
    return value - alpha * abs(al_value), grad - alpha * sign * al_grad


def compute_loss(spec: LossSpec, pred, target, aux_target=None) -> LossResult:
    """Dispatch to the loss named by ``spec.kind``.

    ``aux_target`` holds the decorrelation target and is only used by ep_al.
    """
    if spec.kind == "scc":
        return spearman_loss(pred, target, spec.epsilon)
    if spec.kind == "pcc":
        return pearson_loss(pred, target)
    if spec.kind == "mae":
        return mae_loss(pred, target)
    if spec.kind == "rmse":
        return rmse_loss(pred, target)
    if spec.kind == "ep_al":
        if aux_target is None:
            raise ValueError("ep_al needs a decorrelation target")
        return decorrelation_loss(pred, target, aux_target, spec.epsilon, spec.alpha)
    raise ValueError(f"Unknown loss kind: {spec.kind}")


def batch_is_usable(spec: LossSpec, batch_size: int) -> bool:
    """Correlation losses on fewer than the minimum number of items are skipped."""
    if spec.is_correlation and batch_size < MIN_CORRELATION_BATCH:
        logging.warning(
            "Skipping batch of %s items: %s needs at least %s",
            batch_size, spec.kind, MIN_CORRELATION_BATCH)
        return False
    return True
