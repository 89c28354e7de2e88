"""Backscatter scaling, dB clipping, and the three SAR change features.

The change features are built from a unit-scaled reference/activity pair:
raw differences dVV and dVH live in [-1, 1] and are stored through the
affine map (d + 1) / 2 so everything the model sees is unit-range. The
product feature vvvh = dVV^2 * dVH^2 is derived from the stored encodings,
which keeps vvvh == ((2*d_vv - 1) * (2*d_vh - 1))^2 exact in float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValueRangeError
from .raster import Raster, SceneStack, assert_aligned

DB_LO = -25.0
DB_HI = -5.0


def _first_bad(mask: np.ndarray) -> tuple:
    return tuple(int(v) for v in np.argwhere(mask)[0])


def to_db_clip(sigma0: Raster, lo: float = DB_LO, hi: float = DB_HI) -> Raster:
    """Convert linear backscatter power to dB and clip to [lo, hi].

    Non-positive power has no dB value, so it raises rather than clipping.
    Nodata passes through.
    """
    if not lo < hi:
        raise ValueRangeError(f"need lo < hi, got {lo} >= {hi}")
    data = sigma0.data
    valid = data != np.float32(sigma0.nodata)
    bad = valid & (data <= 0)
    if bad.any():
        raise ValueRangeError(f"non-positive backscatter at (band,row,col)={_first_bad(bad)}")
    out = np.full_like(data, np.float32(sigma0.nodata))
    v = data[valid].astype(np.float64)
    db = 10.0 * np.log10(v)
    out[valid] = np.clip(db, lo, hi).astype(np.float32)
    return sigma0.like(out)


def rescale_unit(db: Raster, lo: float = DB_LO, hi: float = DB_HI) -> Raster:
    """Affinely map dB values from [lo, hi] onto [0, 1]; nodata passes through."""
    if not lo < hi:
        raise ValueRangeError(f"need lo < hi, got {lo} >= {hi}")
    data = db.data
    valid = data != np.float32(db.nodata)
    bad = valid & ((data < lo) | (data > hi))
    if bad.any():
        raise ValueRangeError(
            f"dB value outside [{lo}, {hi}] at (band,row,col)={_first_bad(bad)}")
    out = np.full_like(data, np.float32(db.nodata))
    out[valid] = ((data[valid] - np.float32(lo)) / np.float32(hi - lo)).astype(np.float32)
    return db.like(out)


@dataclass(frozen=True)
class FeatureTriplet:
    """The three SAR change features, each a unit-range single-band raster."""

    d_vv: Raster
    d_vh: Raster
    vvvh: Raster

    def __post_init__(self):
        assert_aligned([self.d_vv, self.d_vh, self.vvvh])
        for name in ("d_vv", "d_vh", "vvvh"):
            r = getattr(self, name)
            vals = r.values()
            if vals.size and (vals.min() < 0 or vals.max() > 1):
                raise ValueRangeError(f"{name} has values outside [0,1]")


def _require_unit(name: str, r: Raster) -> None:
    vals = r.values()
    if vals.size and (vals.min() < 0 or vals.max() > 1):
        raise ValueRangeError(f"{name} must be unit-scaled, found values outside [0,1]")


def change_features(scene: SceneStack) -> FeatureTriplet:
    """Compute (d_vv, d_vh, vvvh) from a scene whose channels are unit-scaled.

    Any nodata among the four channels makes all three outputs nodata at
    that pixel.
    """
    chans = scene.channels()
    assert_aligned(list(chans.values()))
    for name, r in chans.items():
        _require_unit(name, r)

    nd = np.float32(scene.grid.nodata)
    vv_ref = scene.vv_ref.band(0)
    vv_act = scene.vv_act.band(0)
    vh_ref = scene.vh_ref.band(0)
    vh_act = scene.vh_act.band(0)
    valid = (vv_ref != nd) & (vv_act != nd) & (vh_ref != nd) & (vh_act != nd)

    half = np.float32(0.5)
    one = np.float32(1.0)
    two = np.float32(2.0)
    dvv = vv_act - vv_ref
    dvh = vh_act - vh_ref
    d_vv = (dvv + one) * half
    d_vh = (dvh + one) * half
    # derive vvvh from the stored encodings so the consistency identity is exact
    dvv2 = two * d_vv - one
    dvh2 = two * d_vh - one
    prod = dvv2 * dvh2
    vvvh = prod * prod

    def finish(arr: np.ndarray) -> Raster:
        out = np.where(valid, arr, nd).astype(np.float32)
        return scene.vv_ref.like(out)

    return FeatureTriplet(finish(d_vv), finish(d_vh), finish(vvvh))


def rgb_composite(vv_ref: Raster, vv_act: Raster, path) -> None:
    """Write an 8-bit PNG with R = B = vv_ref and G = vv_act (both x255).

    Rounding is half-up on x*255; nodata renders as 0 in all channels.
    """
    from PIL import Image

    assert_aligned([vv_ref, vv_act])
    _require_unit("vv_ref", vv_ref)
    _require_unit("vv_act", vv_act)

    def to_u8(r: Raster) -> np.ndarray:
        v = r.band(0).astype(np.float64)
        valid = r.valid_mask(0)
        scaled = np.floor(v * 255.0 + 0.5)
        u8 = np.where(valid, scaled, 0.0).astype(np.uint8)
        return u8

    ref8 = to_u8(vv_ref)
    act8 = to_u8(vv_act)
    rgb = np.stack([ref8, act8, ref8], axis=-1)
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")
