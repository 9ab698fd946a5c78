"""Per-factor linear probes, the classification loss, and accuracy metrics.

Each embedding row meets only its own probe: p_j = sigmoid(w_j . g_j + b_j).
The loss is two-term binary cross-entropy averaged over the heads, with the
noise head (when present) trained toward label 0 since no noise label
exists. Accuracy is reported over the attribute heads only.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import Tensor, add, log, mean_all, mul, row_sums, scalar_mul, sigmoid, sub

DEFAULT_GAMMA = 0.02  # balance between classification and the correlation penalty


def init_classifier(num_heads: int, channels: int, seed: int) -> tuple[Tensor, Tensor]:
    """Uniform Glorot-style weights, zero biases; one probe per head."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
    bound = np.sqrt(6.0 / (channels + 1))
    w = Tensor(rng.uniform(-bound, bound, (num_heads, channels)), requires_grad=True)
    b = Tensor(np.zeros(num_heads), requires_grad=True)
    return w, b


def predict(embeddings: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Probabilities p_j = sigmoid(w_j . g_j + b_j), one per head."""
    if embeddings.shape != w.shape:
        raise ShapeError(f"embeddings {embeddings.shape} vs probe weights {w.shape}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"bias shape {b.shape} does not match {w.shape[0]} heads")
    logits = add(row_sums(mul(w, embeddings)), b)
    return sigmoid(logits)


def classification_loss(p: Tensor, labels: np.ndarray, noise_head: bool = True) -> Tensor:
    """Binary cross-entropy averaged over all heads.

    ``labels`` covers the attribute heads and, when ``noise_head`` is set,
    a final entry that must be 0.
    """
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if y.shape != (p.shape[0],):
        raise ShapeError(f"labels shape {y.shape} does not match {p.shape[0]} heads")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    if noise_head and y[-1] != 0.0:
        raise ValueError(f"the noise head label must be 0, got {y[-1]}")
    y_t = Tensor(y)
    pos = mul(y_t, log(p))
    neg = mul(Tensor(1.0 - y), log(sub(1.0, p)))
    return scalar_mul(mean_all(add(pos, neg)), -1.0)


def total_loss(cls_loss: Tensor, corr_loss: Tensor, gamma: float = DEFAULT_GAMMA) -> Tensor:
    """Combined objective: classification plus gamma times the correlation penalty."""
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    return add(cls_loss, scalar_mul(corr_loss, gamma))


def evaluate_accuracy(predictions: list[np.ndarray], labels: list[np.ndarray],
                      num_attributes: int) -> tuple[float, np.ndarray]:
    """Mean and per-attribute accuracy (percent) over the first D heads.

    Probabilities >= 0.5 classify as positive (ties go to 1, fixed for
    determinism). The noise head never enters the metric.
    """
    if not predictions:
        raise ValueError("evaluate_accuracy needs at least one sample")
    if len(predictions) != len(labels):
        raise ValueError(f"{len(predictions)} predictions vs {len(labels)} label rows")
    d = num_attributes
    hits = np.zeros(d)
    for p, y in zip(predictions, labels):
        p = np.asarray(p, dtype=np.float64).reshape(-1)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        predicted = (p[:d] >= 0.5).astype(np.float64)
        hits += predicted == y[:d]
    per_attribute = 100.0 * hits / len(predictions)
    return float(per_attribute.mean()), per_attribute
