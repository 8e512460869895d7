"""Segmentation metrics: Dice overlap and mean binary cross-entropy."""

from __future__ import annotations

import numpy as np

from .core import GridMask, ScalarMap
from .errors import DimensionMismatch, ValidationError

CE_CLAMP = 1e-12


def _check_dims(a, b) -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatch(
            f"{a.height}x{a.width} does not match {b.height}x{b.width}"
        )


def dice(pred: GridMask, truth: GridMask, class_id: int = 1) -> float:
    """Dice overlap 2|P & T| / (|P| + |T|) for one class; 1.0 if both empty."""
    _check_dims(pred, truth)
    p = pred.labels == class_id
    t = truth.labels == class_id
    denom = int(p.sum()) + int(t.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(p & t)) / denom


def cross_entropy(prob: ScalarMap, truth: GridMask) -> float:
    """Mean binary cross-entropy of a probability map against a binary mask.

    Probabilities are clamped to [1e-12, 1 - 1e-12] before taking logs.
    """
    _check_dims(prob, truth)
    p = prob.values
    if p.min() < 0.0 or p.max() > 1.0:
        raise ValidationError("expected a probability map with values in [0, 1]")
    p = np.clip(p, CE_CLAMP, 1.0 - CE_CLAMP)
    y = truth.labels > 0
    terms = np.where(y, -np.log(p), -np.log1p(-p))
    return float(terms.mean())
