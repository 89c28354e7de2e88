"""Segmentation losses with analytic gradients.

Both losses take probabilities (already sigmoid-ed), a binary target array,
and an optional validity mask; invalid pixels contribute nothing to the
value or the gradient.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, ValueRangeError
from .tensor import Tensor, make_node

_CLAMP = 1e-7


def _check(p: Tensor, y: np.ndarray, valid) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y)
    if y.shape != p.shape:
        raise DimensionError(f"target shape {y.shape} != prediction shape {p.shape}")
    if not ((y == 0) | (y == 1)).all():
        raise ValueRangeError("targets must be binary")
    if valid is None:
        valid = np.ones(p.shape, dtype=bool)
    else:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != p.shape:
            raise DimensionError(f"valid-mask shape {valid.shape} != prediction shape {p.shape}")
    return y.astype(p.data.dtype), valid


def weighted_bce(p: Tensor, y, pos_weight: float = 1.0, valid=None) -> Tensor:
    """Mean over valid pixels of -[w*y*log p + (1-y)*log(1-p)], p clamped to
    [1e-7, 1-1e-7]."""
    dt = p.data.dtype
    yb, vb = _check(p, y, valid)
    m = int(vb.sum())
    if m == 0:
        raise DimensionError("weighted_bce: no valid pixels")
    w = dt.type(pos_weight)
    lo, hi = dt.type(_CLAMP), dt.type(1.0 - _CLAMP)
    pc = np.clip(p.data, lo, hi)
    terms = -(w * yb * np.log(pc) + (1.0 - yb) * np.log1p(-pc))
    loss = np.asarray(terms[vb].sum(dtype=np.float64) / m, dtype=dt)

    def bw(g):
        inside = (p.data > lo) & (p.data < hi)
        dterm = -(w * yb / pc - (1.0 - yb) / (1.0 - pc))
        gp = np.where(vb & inside, dterm, 0.0).astype(dt) * (g / dt.type(m))
        p.accumulate(gp)

    return make_node(loss, (p,), bw)


def soft_jaccard_loss(p: Tensor, y, valid=None, eps: float = 1.0) -> Tensor:
    """1 - (I + eps)/(U + eps) with I = sum(p*y), U = sum(p) + sum(y) - I."""
    dt = p.data.dtype
    yb, vb = _check(p, y, valid)
    pv = np.where(vb, p.data, 0.0).astype(dt)
    yv = np.where(vb, yb, 0.0).astype(dt)
    inter = float((pv * yv).sum(dtype=np.float64))
    union = float(pv.sum(dtype=np.float64)) + float(yv.sum(dtype=np.float64)) - inter
    loss = np.asarray(1.0 - (inter + eps) / (union + eps), dtype=dt)

    def bw(g):
        denom = (union + eps) ** 2
        # d/dp of (I+eps)/(U+eps): [y*(U+eps) - (I+eps)*(1-y)] / (U+eps)^2
        dp = (yv * (union + eps) - (inter + eps) * (1.0 - yv)) / denom
        gp = np.where(vb, -dp, 0.0).astype(dt) * g
        p.accumulate(gp)

    return make_node(loss, (p,), bw)
