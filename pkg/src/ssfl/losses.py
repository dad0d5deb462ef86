"""Training objectives evaluated at the logits, with their logit gradients.

Every loss is normalized by the full batch size, including the gated
pseudo-label losses, so a batch with few confident samples contributes
proportionally less. Pseudo-labels are treated as constants.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

DEFAULT_THRESHOLD = 0.95


@dataclass
class LossOutput:
    value: float
    logit_gradients: np.ndarray
    active_count: int


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _check_logits(logits):
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise InvalidInputError("logits must be a non-empty (batch, classes) array")
    return logits


def _check_threshold(tau):
    if not 0 < tau < 1:
        raise InvalidInputError(f"confidence threshold must lie in (0, 1), got {tau}")


def _masked_cross_entropy(logits, targets, mask):
    n = logits.shape[0]
    logp = log_softmax(logits)
    rows = np.arange(n)
    per_sample = -logp[rows, targets] * mask
    grad = np.exp(logp)
    grad[rows, targets] -= 1.0
    grad *= (mask / n)[:, None]
    return LossOutput(float(per_sample.sum() / n), grad, int(mask.sum()))


def cross_entropy(logits, labels):
    logits = _check_logits(logits)
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise InvalidInputError("need exactly one label per row of logits")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise InvalidInputError(f"labels must lie in [0, {logits.shape[1]})")
    return _masked_cross_entropy(logits, labels.astype(np.intp), np.ones(logits.shape[0]))


def server_supervised_loss(logits, labels):
    return cross_entropy(logits, labels)


def supervised_user_loss(logits, labels):
    return cross_entropy(logits, labels)


def pseudo_labels(weak_logits, tau):
    """Confidence gate and argmax labels (lowest index wins ties)."""
    probs = softmax(weak_logits)
    return probs.max(axis=1) >= tau, probs.argmax(axis=1)


def crl_user_loss(weak_logits, strong_logits, tau=DEFAULT_THRESHOLD):
    _check_threshold(tau)
    weak_logits = _check_logits(weak_logits)
    strong_logits = _check_logits(strong_logits)
    if weak_logits.shape != strong_logits.shape:
        raise InvalidInputError("weak and strong logits must share a shape")
    mask, labels = pseudo_labels(weak_logits, tau)
    return _masked_cross_entropy(strong_logits, labels, mask.astype(np.float64))


def self_training_loss(weak_logits, tau=DEFAULT_THRESHOLD):
    _check_threshold(tau)
    weak_logits = _check_logits(weak_logits)
    mask, labels = pseudo_labels(weak_logits, tau)
    return _masked_cross_entropy(weak_logits, labels, mask.astype(np.float64))
