"""Masked cross entropy over partially labeled pixel grids."""

from __future__ import annotations

import numpy as np

from .ops import log_softmax


def masked_cross_entropy(logits, labels, supervision):
    """Mean negative log-likelihood over supervised pixels only.

    logits [n, k, h, w]; labels [n, h, w] integer class codes;
    supervision [n, h, w] in {0, 1}. Pixels with supervision 0 are
    gathered out before any arithmetic touches them, so their label
    values (conventionally 255) and their logits cannot perturb the
    result. The sum runs in float64 regardless of input dtype.

    Returns (loss, grad) where grad has the shape and dtype of logits.
    Raises ValueError when no pixel is supervised.
    """
    if logits.ndim != 4:
        raise ValueError("logits must be [n, k, h, w]")
    n, k, h, w = logits.shape
    if labels.shape != (n, h, w) or supervision.shape != (n, h, w):
        raise ValueError("labels and supervision must be [n, h, w] matching logits")
    gate = supervision.astype(bool)
    count = int(gate.sum())
    if count == 0:
        raise ValueError("no supervised pixels in batch")
    picked = labels[gate].astype(np.int64)
    if picked.min() < 0 or picked.max() >= k:
        raise ValueError(f"supervised labels must lie in [0, {k}), got range "
                         f"[{picked.min()}, {picked.max()}]")

    logp = log_softmax(logits, axis=1)
    # gather [count, k] rows of log-probabilities at supervised pixels
    logp_rows = np.moveaxis(logp, 1, -1)[gate]
    loss = -np.sum(logp_rows[np.arange(count), picked], dtype=np.float64) / count

    softmax_rows = np.exp(logp_rows)
    softmax_rows[np.arange(count), picked] -= 1.0
    grad = np.zeros_like(logits)
    grad_view = np.moveaxis(grad, 1, -1)
    grad_view[gate] = (softmax_rows / count).astype(logits.dtype)
    return float(loss), grad
