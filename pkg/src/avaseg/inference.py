"""Whole-scene prediction by overlapping windows with symmetry-transform
averaging and Hann-weighted blending.

Numerical layout is chosen so stitching is reproducible and provably
well-behaved:

- window outputs are float32; blending weights are float32; their products
  and the weight totals are accumulated in float64, where each product of
  two float32 values is exact. With up to 25 windows overlapping a pixel
  (stride >= window/5) the sums stay exact too, so the final ratio rounds
  once. A constant-emitting model therefore stitches to exactly that
  constant, and accumulation order cannot matter.
- the per-window transform ensemble is sorted per pixel before summing, so
  the average depends only on the multiset of values. Together with a
  mirror-symmetric weight window this makes prediction equivariant under
  horizontal flip (bit-for-bit) whenever the transform set is closed under
  hflip and the reflection padding is symmetric.
"""

from __future__ import annotations

import numpy as np

from .dataset import FeatureStack
from .errors import DimensionError, ValueRangeError
from .raster import Raster

FULL_TTA = ("id", "rot90", "rot180", "rot270", "hflip", "hflip90", "hflip180", "hflip270")

_TTA_SPEC = {
    "id": (0, False),
    "rot90": (1, False),
    "rot180": (2, False),
    "rot270": (3, False),
    "hflip": (0, True),
    "hflip90": (1, True),
    "hflip180": (2, True),
    "hflip270": (3, True),
}


def tta_apply(arr: np.ndarray, name: str) -> np.ndarray:
    """Apply a dihedral transform to the trailing two axes."""
    k, flip = _TTA_SPEC[name]
    out = arr[..., :, ::-1] if flip else arr
    return np.rot90(out, k, axes=(-2, -1))


def tta_invert(arr: np.ndarray, name: str) -> np.ndarray:
    k, flip = _TTA_SPEC[name]
    out = np.rot90(arr, -k, axes=(-2, -1))
    return out[..., :, ::-1] if flip else out


def hann_window(n: int) -> np.ndarray:
    """Mirror-symmetric float32 sin^2 window with strictly positive weights.

    The first half is computed and the second half mirrored from it, so
    w[i] == w[n-1-i] holds bit-for-bit. Adjacent copies at stride n/2
    partition unity: sin^2 + cos^2 of the same argument.
    """
    if n < 2 or n % 2:
        raise DimensionError(f"window length must be even and >= 2, got {n}")
    i = np.arange(n // 2, dtype=np.float64)
    half = np.sin(np.pi * (i + 0.5) / n) ** 2
    w = np.empty(n, dtype=np.float32)
    w[: n // 2] = half.astype(np.float32)
    w[n // 2:] = w[: n // 2][::-1]
    return w


def _pad_amounts(size: int, window: int, stride: int) -> tuple[int, int]:
    """Total reflect padding so (padded - window) is a multiple of stride."""
    target = max(size, window)
    over = (target - window) % stride
    if over:
        target += stride - over
    total = target - size
    return total // 2, total - total // 2


def predict_scene(model, stack: FeatureStack, window: int = 160,
                  stride: int | None = None, tta: tuple[str, ...] = FULL_TTA,
                  batched_tta: bool = True) -> Raster:
    """Tiled probability map over a full scene.

    stride defaults to window/2. tta names index the eight dihedral
    transforms; pass ("id",) to disable the ensemble.
    """
    stride = window // 2 if stride is None else int(stride)
    if stride < 1 or stride > window:
        raise ValueRangeError(f"stride must be in [1, window], got {stride}")
    for name in tta:
        if name not in _TTA_SPEC:
            raise ValueRangeError(f"unknown transform {name!r}")
    if len(set(tta)) != len(tta):
        raise ValueRangeError("duplicate transforms in tta set")

    feats = stack.array()
    valid = stack.valid()
    h, w = feats.shape[1:]
    pt, pb = _pad_amounts(h, window, stride)
    pl, pr = _pad_amounts(w, window, stride)
    padded = np.pad(feats, ((0, 0), (pt, pb), (pl, pr)), mode="reflect")
    ph, pw = padded.shape[1:]

    w1 = hann_window(window)
    # keep combined weights at float32 precision: a float32 weight times a
    # float32 window value is exact in the float64 accumulators
    w2d = np.outer(w1, w1).astype(np.float64)
    num = np.zeros((ph, pw), dtype=np.float64)
    den = np.zeros((ph, pw), dtype=np.float64)
    n_tta = len(tta)

    for r0 in range(0, ph - window + 1, stride):
        for c0 in range(0, pw - window + 1, stride):
            win = padded[:, r0:r0 + window, c0:c0 + window]
            if batched_tta:
                xb = np.stack([tta_apply(win, name) for name in tta])
                probs = model.predict(xb)[:, 0]
            else:
                probs = np.stack([model.predict(tta_apply(win, name)[np.newaxis])[0, 0]
                                  for name in tta])
            back = np.stack([tta_invert(probs[i], name) for i, name in enumerate(tta)])
            back = np.sort(back.astype(np.float32, copy=False), axis=0)
            avg64 = back.sum(axis=0, dtype=np.float64) / n_tta
            avg = avg64.astype(np.float32).astype(np.float64)
            num[r0:r0 + window, c0:c0 + window] += w2d * avg
            den[r0:r0 + window, c0:c0 + window] += w2d
    prob = (num / den)[pt:pt + h, pl:pl + w].astype(np.float32)

    nd = np.float32(stack.grid.nodata)
    out = np.where(valid, prob, nd)
    return Raster(stack.grid, out)


def threshold(prob: Raster, tau: float = 0.5) -> Raster:
    """Binary mask: 1 where probability >= tau; nodata propagated."""
    p = prob.band(0)
    valid = prob.valid_mask(0)
    mask = (p >= np.float32(tau)).astype(np.float32)
    out = np.where(valid, mask, np.float32(prob.nodata))
    return prob.like(out)
