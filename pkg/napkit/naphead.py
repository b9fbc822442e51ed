"""The NAP predictor head.

A head pools a frozen encoder feature sequence into one vector (temporal
average, or attention with a single trainable query) and maps it to a scalar
with a small MLP. Only the head is trained; the encoder features never change.

Variants follow a fixed layout:

* ``2L-X``: affine -> X -> affine -> scalar
* ``3L-X``: affine -> X -> affine -> tanh -> affine -> scalar

where X is tanh, relu, softmax (SM), or layer norm followed by exp or tanh
(LN-Exp, LN-Tanh). 2L widths are chosen so that the parameter count matches
the 3L variant of the same activation.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import softmax

from .constants import (
    HEAD_FORMAT,
    HEAD_FORMAT_VERSION,
    LAYER_NORM_EPS,
    POOLINGS,
    VARIANTS,
    train_schema,
)
from .losses import LossSpec, batch_is_usable, compute_loss
from .metrics import spearman_exact

ACTIVATIONS = {
    "Tanh": "tanh",
    "ReLU": "relu",
    "SM": "softmax",
    "LN-Exp": "exp",
    "LN-Tanh": "tanh",
}


@dataclass
class FeatureSequence:
    """Frozen encoder outputs of one example.

    ``mask`` marks valid positions; it defaults to all positions valid.
    """
    features: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError(
                f"features must be an L x d matrix with L >= 1, got {self.features.shape}")
        if self.mask is None:
            self.mask = np.ones(self.features.shape[0], dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != (self.features.shape[0],):
            raise ValueError("mask length must match the number of positions")
        if not self.mask.any():
            raise ValueError("at least one position must be valid")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite input")

    @property
    def width(self):
        return self.features.shape[1]


def variant_layout(variant: str) -> Tuple[int, bool, str]:
    """Split a variant name into (number of layers, uses layer norm, activation)."""
    if variant not in VARIANTS:
        raise ValueError(f"Unknown variant {variant!r}. Valid variants: {VARIANTS}")
    depth, activation_name = variant.split("-", 1)
    return int(depth[0]), activation_name.startswith("LN-"), ACTIVATIONS[activation_name]


def count_mlp_params(n_layers: int, feature_width: int, width: int, layer_norm: bool) -> int:
    """Number of MLP parameters, excluding the attention query."""
    count = width * feature_width + width
    if layer_norm:
        count += 2 * width
    if n_layers == 3:
        count += width * width + width
    return count + width + 1


def matched_width(feature_width: int, hidden_width: int, layer_norm: bool) -> int:
    """Width of a 2L head with as many parameters as the 3L head of ``hidden_width``."""
    target = count_mlp_params(3, feature_width, hidden_width, layer_norm)
    per_unit = feature_width + 2 + (2 if layer_norm else 0)
    return max(1, int(round((target - 1) / per_unit)))


@dataclass
class HeadParams:
    """All trainable parameters of one head, keyed by tensor name.

    Tensors: ``query`` (attentive pooling only), ``W1``/``b1``,
    ``ln_gain``/``ln_bias`` (LN variants), ``W2``/``b2`` and, for 3L
    variants, ``W3``/``b3``. Weight matrices are (out, in).
    """
    variant: str
    pooling: str
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        variant_layout(self.variant)
        if self.pooling not in POOLINGS:
            raise ValueError(f"Unknown pooling {self.pooling!r}. Valid poolings: {POOLINGS}")
        if (self.pooling == "attentive") != ("query" in self.tensors):
            raise ValueError("a query tensor is present iff pooling is attentive")

    @property
    def n_layers(self):
        return variant_layout(self.variant)[0]

    @property
    def layer_norm(self):
        return variant_layout(self.variant)[1]

    @property
    def activation(self):
        return variant_layout(self.variant)[2]

    @property
    def feature_width(self):
        return self.tensors["W1"].shape[1]

    @property
    def output_layer(self):
        return f"W{self.n_layers}", f"b{self.n_layers}"

    @property
    def n_params(self):
        return sum(t.size for t in self.tensors.values())

    def copy(self):
        return HeadParams(self.variant, self.pooling,
                          {name: t.copy() for name, t in self.tensors.items()})

    def to_text(self) -> str:
        """Serialize to the versioned text format, with exact float round trip."""
        lines = [f"{HEAD_FORMAT} {HEAD_FORMAT_VERSION}",
                 f"variant {self.variant}",
                 f"pooling {self.pooling}"]
        for name, tensor in self.tensors.items():
            lines.append(f"tensor {name} {' '.join(str(s) for s in tensor.shape)}")
            for row in np.atleast_2d(tensor):
                lines.append(" ".join(repr(float(x)) for x in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str):
        lines = text.splitlines()
        header = lines[0].split()
        if len(header) != 2 or header[0] != HEAD_FORMAT:
            raise ValueError(f"not a {HEAD_FORMAT} file")
        if int(header[1]) != HEAD_FORMAT_VERSION:
            raise ValueError(f"unsupported {HEAD_FORMAT} version {header[1]}")
        variant = lines[1].split(" ", 1)[1]
        pooling = lines[2].split(" ", 1)[1]
        tensors = {}
        position = 3
        while position < len(lines):
            _, name, *shape = lines[position].split()
            shape = tuple(int(s) for s in shape)
            n_rows = shape[0] if len(shape) == 2 else 1
            rows = lines[position + 1:position + 1 + n_rows]
            values = [float(x) for row in rows for x in row.split()]
            tensors[name] = np.array(values, dtype=np.float64).reshape(shape)
            position += 1 + n_rows
        return cls(variant, pooling, tensors)

    def save(self, path: Union[str, Path]):
        logging.info("Write head parameters to %s", path)
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]):
        logging.debug("Read head parameters from %s", path)
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def init_head(variant: str, pooling: str, feature_width: int,
              hidden_width: int = 64, seed: int = 0) -> HeadParams:
    """Create seeded initial parameters for a head.

    Weights are Gaussian with variance 1/fan_in, biases and the attention
    query start at zero, layer norm gains at one.
    """
    n_layers, layer_norm, _ = variant_layout(variant)
    width = hidden_width if n_layers == 3 else matched_width(
        feature_width, hidden_width, layer_norm)
    rng = np.random.default_rng(seed)

    def dense(n_out, n_in):
        return rng.standard_normal((n_out, n_in)) / math.sqrt(n_in)

    tensors = {}
    if pooling == "attentive":
        tensors["query"] = np.zeros(feature_width)
    tensors["W1"] = dense(width, feature_width)
    tensors["b1"] = np.zeros(width)
    if layer_norm:
        tensors["ln_gain"] = np.ones(width)
        tensors["ln_bias"] = np.zeros(width)
    if n_layers == 3:
        tensors["W2"] = dense(hidden_width, width)
        tensors["b2"] = np.zeros(hidden_width)
    tensors[f"W{n_layers}"] = dense(1, hidden_width if n_layers == 3 else width)
    tensors[f"b{n_layers}"] = np.zeros(1)
    params = HeadParams(variant, pooling, tensors)
    logging.debug("Initialised %s head with %s parameters", variant, params.n_params)
    return params


def _activate(activation: str, x: np.ndarray) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(x)
    if activation == "relu":
        return np.maximum(x, 0.0)
    if activation == "softmax":
        return softmax(x, axis=-1)
    if activation == "exp":
        return np.exp(x)
    raise ValueError(f"Unknown activation {activation}")


def _activate_backward(activation: str, x: np.ndarray, y: np.ndarray,
                       grad: np.ndarray) -> np.ndarray:
    if activation == "tanh":
        return grad * (1.0 - y ** 2)
    if activation == "relu":
        return grad * (x > 0)
    if activation == "softmax":
        return y * (grad - np.sum(grad * y, axis=-1, keepdims=True))
    if activation == "exp":
        return grad * y
    raise ValueError(f"Unknown activation {activation}")


def pool_batch(features: np.ndarray, mask: np.ndarray,
               query: Optional[np.ndarray] = None) -> Tuple[np.ndarray, dict]:
    """Pool a padded batch of B x L x d features over the valid positions.

    Masked positions are zeroed first, so their values never reach the output.
    """
    features = np.where(mask[..., None], features, 0.0)
    cache = {"features": features, "mask": mask}
    if query is None:
        counts = mask.sum(axis=1, keepdims=True)
        return features.sum(axis=1) / counts, cache
    scores = features @ query / math.sqrt(features.shape[-1])
    weights = softmax(np.where(mask, scores, -np.inf), axis=1)
    cache["weights"] = weights
    return np.einsum("bl,bld->bd", weights, features), cache


def average_pool(fs: FeatureSequence) -> np.ndarray:
    """Mean of the valid rows."""
    pooled, _ = pool_batch(fs.features[None], fs.mask[None])
    return pooled[0]


def attentive_pool(fs: FeatureSequence, query) -> Tuple[np.ndarray, np.ndarray]:
    """Single-query attention pooling. Returns the pooled vector and the weights."""
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (fs.width,):
        raise ValueError(f"query has shape {query.shape}, expected ({fs.width},)")
    pooled, cache = pool_batch(fs.features[None], fs.mask[None], query)
    return pooled[0], cache["weights"][0]


def forward_batch(features: np.ndarray, mask: np.ndarray,
                  params: HeadParams) -> Tuple[np.ndarray, dict]:
    """Score a padded batch. Returns B scores and the cache for backward."""
    if features.ndim != 3 or features.shape[-1] != params.feature_width:
        raise ValueError(
            f"dimension mismatch: features {features.shape}, "
            f"head expects width {params.feature_width}")
    t = params.tensors
    pooled, cache = pool_batch(features, mask, t.get("query"))
    cache["pooled"] = pooled
    z1 = pooled @ t["W1"].T + t["b1"]
    if params.layer_norm:
        centred = z1 - z1.mean(axis=-1, keepdims=True)
        std = np.sqrt(np.mean(centred ** 2, axis=-1, keepdims=True) + LAYER_NORM_EPS)
        normed = centred / std
        cache["normed"], cache["std"] = normed, std
        n1 = normed * t["ln_gain"] + t["ln_bias"]
    else:
        n1 = z1
    a1 = _activate(params.activation, n1)
    cache["n1"], cache["a1"] = n1, a1
    hidden = a1
    if params.n_layers == 3:
        hidden = np.tanh(a1 @ t["W2"].T + t["b2"])
        cache["a2"] = hidden
    weight, bias = params.output_layer
    scores = hidden @ t[weight][0] + t[bias][0]
    cache["params"] = params
    return scores, cache


def backward_batch(cache: dict, upstream: np.ndarray) -> Dict[str, np.ndarray]:
    """Gradients of sum(upstream * scores) for every tensor of the head."""
    params: HeadParams = cache["params"]
    t = params.tensors
    upstream = np.asarray(upstream, dtype=np.float64)
    grads = {}
    weight, bias = params.output_layer
    hidden = cache["a2"] if params.n_layers == 3 else cache["a1"]
    grads[weight] = (upstream @ hidden)[None, :]
    grads[bias] = np.array([upstream.sum()])
    grad_hidden = upstream[:, None] * t[weight]
    if params.n_layers == 3:
        grad_z2 = grad_hidden * (1.0 - cache["a2"] ** 2)
        grads["W2"] = grad_z2.T @ cache["a1"]
        grads["b2"] = grad_z2.sum(axis=0)
        grad_hidden = grad_z2 @ t["W2"]
    grad_n1 = _activate_backward(params.activation, cache["n1"], cache["a1"], grad_hidden)
    if params.layer_norm:
        normed = cache["normed"]
        grads["ln_gain"] = np.sum(grad_n1 * normed, axis=0)
        grads["ln_bias"] = grad_n1.sum(axis=0)
        grad_normed = grad_n1 * t["ln_gain"]
        grad_z1 = (
            grad_normed
            - grad_normed.mean(axis=-1, keepdims=True)
            - normed * np.mean(grad_normed * normed, axis=-1, keepdims=True)
        ) / cache["std"]
    else:
        grad_z1 = grad_n1
    grads["W1"] = grad_z1.T @ cache["pooled"]
    grads["b1"] = grad_z1.sum(axis=0)
    if "query" in t:
        features, weights = cache["features"], cache["weights"]
        grad_pooled = grad_z1 @ t["W1"]
        grad_weights = np.einsum("bd,bld->bl", grad_pooled, features)
        grad_scores = weights * (
            grad_weights - np.sum(grad_weights * weights, axis=1, keepdims=True))
        grads["query"] = np.einsum(
            "bl,bld->d", grad_scores, features) / math.sqrt(features.shape[-1])
    return {name: grads[name] for name in t}


def head_forward(fs: FeatureSequence, params: HeadParams) -> Tuple[float, dict]:
    """Score one feature sequence."""
    scores, cache = forward_batch(fs.features[None], fs.mask[None], params)
    return float(scores[0]), cache


def head_backward(cache: dict, upstream_grad: float) -> Dict[str, np.ndarray]:
    """Parameter gradients of one scored example, scaled by ``upstream_grad``."""
    return backward_batch(cache, np.array([upstream_grad], dtype=np.float64))


def predict(params: HeadParams, features: np.ndarray, mask: np.ndarray,
            batch_size: int = 256) -> np.ndarray:
    """Score a padded set of feature sequences in fixed-size chunks."""
    chunks = [
        forward_batch(features[start:start + batch_size],
                      mask[start:start + batch_size], params)[0]
        for start in range(0, features.shape[0], batch_size)
    ]
    return np.concatenate(chunks) if chunks else np.zeros(0)


class AdamOptimizer:
    """Adam with bias-corrected moments, updating a HeadParams in place."""

    def __init__(self, params: HeadParams, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {name: np.zeros_like(t) for name, t in params.tensors.items()}
        self._v = {name: np.zeros_like(t) for name, t in params.tensors.items()}

    def step(self, grads: Dict[str, np.ndarray]):
        self.step_count += 1
        correction1 = 1.0 - self.beta1 ** self.step_count
        correction2 = 1.0 - self.beta2 ** self.step_count
        for name, tensor in self.params.tensors.items():
            grad = grads[name]
            self._m[name] = self.beta1 * self._m[name] + (1.0 - self.beta1) * grad
            self._v[name] = self.beta2 * self._v[name] + (1.0 - self.beta2) * grad ** 2
            m_hat = self._m[name] / correction1
            v_hat = self._v[name] / correction2
            tensor -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainConfig:
    """Hyperparameters of one head training run.

    ``patience_evals`` defaults to ``evals_per_epoch``: training stops once
    validation has not improved for a whole epoch.
    """
    loss: LossSpec
    learning_rate: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 30
    evals_per_epoch: int = 10
    patience_evals: Optional[int] = None
    seed: int = 0
    hidden_width: int = 64

    def __post_init__(self):
        if isinstance(self.loss, dict):
            self.loss = LossSpec.from_dict(self.loss)
        train_schema.validate({**self.__dict__, "loss": self.loss.to_dict()})
        if self.loss.is_correlation and self.batch_size < 8:
            raise ValueError(
                f"batch_size {self.batch_size} is too small for {self.loss.kind}, "
                f"the minimum is 8")

    @classmethod
    def from_dict(cls, config_dict: dict):
        return cls(**config_dict)

    @property
    def patience(self):
        return self.patience_evals if self.patience_evals is not None else self.evals_per_epoch


def _validation_spearman(params, features, mask, target) -> float:
    predictions = predict(params, features, mask)
    try:
        return spearman_exact(predictions, target)
    except ValueError as error:
        logging.warning("Validation predictions are degenerate (%s), scoring 0", error)
        return 0.0


def train_head(records: Sequence, target_field: str, config: TrainConfig,
               init_params: HeadParams) -> Tuple[HeadParams, List[Tuple[int, float]]]:
    """Train a head on the records of the train split.

    Validation Spearman is computed ``evals_per_epoch`` times per epoch
    (and once before the first step); training stops after
    ``config.patience`` evaluations without improvement.

    Returns
    -------
    tuple[HeadParams, list[tuple[int, float]]]
        The parameters at the best validation point and the
        ``(step, validation_spearman)`` history.
    """
    from .records import split_records, stack_features, target_values

    splits = split_records(records)
    train, validation = splits.get("train", []), splits.get("validation", [])
    if not train or not validation:
        raise ValueError(
            f"empty split: {len(train)} train and {len(validation)} validation records")
    loss = config.loss
    train_x, train_mask = stack_features(train)
    train_y = target_values(train, target_field)
    if np.ptp(train_y) == 0:
        raise ValueError("degenerate target")
    train_aux = (target_values(train, loss.decorrelate_field)
                 if loss.kind == "ep_al" else None)
    val_x, val_mask = stack_features(validation)
    val_y = target_values(validation, target_field)

    params = init_params.copy()
    optimizer = AdamOptimizer(params, config.learning_rate)
    rng = np.random.default_rng(config.seed)
    n_train = len(train)
    n_batches = math.ceil(n_train / config.batch_size)
    eval_every = max(1, math.ceil(n_batches / config.evals_per_epoch))

    best_metric = _validation_spearman(params, val_x, val_mask, val_y)
    best_params = params.copy()
    history = [(0, best_metric)]
    evals_since_best = 0
    step = 0
    logging.info("Train %s head on %s with %s loss: %s train, %s validation records",
                 params.variant, target_field, loss.kind, n_train, len(validation))
    for epoch in range(config.max_epochs):
        order = rng.permutation(n_train)
        for start in range(0, n_train, config.batch_size):
            idx = order[start:start + config.batch_size]
            step += 1
            if batch_is_usable(loss, idx.size):
                scores, cache = forward_batch(train_x[idx], train_mask[idx], params)
                aux = train_aux[idx] if train_aux is not None else None
                try:
                    _, grad = compute_loss(loss, scores, train_y[idx], aux)
                except ValueError as error:
                    logging.warning("Skipping batch at step %s: %s", step, error)
                else:
                    optimizer.step(backward_batch(cache, grad))
            if step % eval_every:
                continue
            metric = _validation_spearman(params, val_x, val_mask, val_y)
            history.append((step, metric))
            logging.debug("Epoch %s step %s validation spearman %.4f", epoch, step, metric)
            if metric > best_metric:
                best_metric, best_params = metric, params.copy()
                evals_since_best = 0
            else:
                evals_since_best += 1
            if evals_since_best >= config.patience:
                logging.info("Stopping at step %s, best validation spearman %.4f",
                             step, best_metric)
                return best_params, history
    logging.info("Reached %s epochs, best validation spearman %.4f",
                 config.max_epochs, best_metric)
    return best_params, history
