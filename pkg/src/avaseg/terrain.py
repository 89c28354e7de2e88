"""DEM-derived slope, release-zone masking, and the potential angle of reach.

PAR at a pixel is the largest elevation angle to any release-zone pixel
within the search radius, clamped below at zero. Angles are compared via
their tangent ratios and the arctangent is applied once to the maximum;
arctan is monotone, so this is equivalent to maximizing the angle itself
and keeps the windowed field bit-identical to the brute-force definition.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionError, ValueRangeError
from .raster import Raster, assert_aligned

RELEASE_BAND = (35.0, 45.0)
PAR_RADIUS = 2000.0


def slope_deg(dem: Raster, spacing: float | None = None) -> Raster:
    """Slope angle in degrees from the Horn 8-neighbor gradient.

    Border pixels use clamped-edge replication. A nodata anywhere in the
    3x3 window makes the output pixel nodata. If spacing is omitted the
    grid's pixel sizes are used (dx and |dy| may differ).
    """
    if dem.bands != 1:
        raise DimensionError(f"slope expects a single band, got {dem.bands}")
    dx = float(spacing) if spacing is not None else dem.grid.pixel_dx
    dy = float(spacing) if spacing is not None else abs(dem.grid.pixel_dy)
    if dx <= 0 or dy <= 0:
        raise ValueRangeError("pixel spacing must be positive")

    z = dem.band(0).astype(np.float64)
    nd = np.float32(dem.nodata)
    valid = dem.band(0) != nd
    zp = np.pad(z, 1, mode="edge")
    vp = np.pad(valid, 1, mode="edge")

    def w(dr, dc):
        return zp[1 + dr: 1 + dr + z.shape[0], 1 + dc: 1 + dc + z.shape[1]]

    def wv(dr, dc):
        return vp[1 + dr: 1 + dr + z.shape[0], 1 + dc: 1 + dc + z.shape[1]]

    gx = ((w(-1, 1) + 2.0 * w(0, 1) + w(1, 1))
          - (w(-1, -1) + 2.0 * w(0, -1) + w(1, -1))) / (8.0 * dx)
    gy = ((w(1, -1) + 2.0 * w(1, 0) + w(1, 1))
          - (w(-1, -1) + 2.0 * w(-1, 0) + w(-1, 1))) / (8.0 * dy)
    slope = np.degrees(np.arctan(np.hypot(gx, gy)))

    ok = np.ones_like(valid)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            ok &= wv(dr, dc)
    out = np.where(ok, slope, float(dem.nodata)).astype(np.float32)
    return dem.like(out)


def release_mask(slope: Raster, band: tuple[float, float] = RELEASE_BAND) -> Raster:
    """Binary mask of pixels whose slope lies inside the release band (inclusive)."""
    lo, hi = float(band[0]), float(band[1])
    if not lo < hi:
        raise ValueRangeError(f"release band must satisfy min < max, got {band}")
    s = slope.band(0)
    valid = slope.valid_mask(0)
    mask = ((s >= lo) & (s <= hi) & valid).astype(np.float32)
    out = np.where(valid, mask, np.float32(slope.nodata))
    return slope.like(out)


def _release_indices(dem: Raster, release: Raster) -> np.ndarray:
    assert_aligned([dem, release])
    rel = (release.band(0) == 1) & dem.valid_mask(0)
    return np.argwhere(rel)


def par_brute(dem: Raster, release: Raster, target: tuple[int, int]) -> float:
    """Angle of reach at one pixel by scanning every release pixel.

    Reference implementation: max over release pixels x != target of
    atan((z(x) - z(target)) / distance), clamped at 0. Returns 0.0 when no
    release pixel exists or all angles are negative.
    """
    r, c = int(target[0]), int(target[1])
    h, w = dem.shape
    if not (0 <= r < h and 0 <= c < w):
        raise DimensionError(f"target {target} out of bounds for {h}x{w}")
    if not dem.valid_mask(0)[r, c]:
        raise ValueRangeError(f"target {target} is nodata")
    z = dem.band(0).astype(np.float64)
    dx = dem.grid.pixel_dx
    dy = dem.grid.pixel_dy
    idx = _release_indices(dem, release)
    if idx.shape[0] == 0:
        return 0.0
    rr, cc = idx[:, 0], idx[:, 1]
    keep = ~((rr == r) & (cc == c))
    rr, cc = rr[keep], cc[keep]
    if rr.size == 0:
        return 0.0
    dist = np.hypot((cc - c) * dx, (rr - r) * dy)
    ratios = (z[rr, cc] - z[r, c]) / dist
    best = ratios.max()
    if best <= 0.0:
        return 0.0
    return float(np.degrees(np.arctan(best)))


def par_field(dem: Raster, release: Raster, radius: float = PAR_RADIUS) -> Raster:
    """Per-pixel angle of reach over release pixels within the search radius.

    Iterates release pixels and updates a running maximum tangent ratio over
    each one's circular neighborhood, then converts to degrees once. The
    result does not depend on iteration order. Nodata targets stay nodata.
    """
    spacing = min(dem.grid.pixel_dx, abs(dem.grid.pixel_dy))
    if radius < spacing:
        raise ValueRangeError(f"radius {radius} is below pixel spacing {spacing}")
    h, w = dem.shape
    z = dem.band(0).astype(np.float64)
    valid = dem.valid_mask(0)
    dx = dem.grid.pixel_dx
    dy = dem.grid.pixel_dy

    best = np.full((h, w), -np.inf)
    reach_c = int(math.floor(radius / dx)) if math.isfinite(radius) else w
    reach_r = int(math.floor(radius / abs(dy))) if math.isfinite(radius) else h

    cols = np.arange(w)
    rows = np.arange(h)
    for rr, cc in _release_indices(dem, release):
        r0, r1 = max(0, rr - reach_r), min(h, rr + reach_r + 1)
        c0, c1 = max(0, cc - reach_c), min(w, cc + reach_c + 1)
        dxm = (cols[c0:c1] - cc) * dx
        dym = (rows[r0:r1] - rr) * dy
        dist = np.hypot(dxm[np.newaxis, :], dym[:, np.newaxis])
        inside = (dist <= radius) & (dist > 0) & valid[r0:r1, c0:c1]
        ratio = (z[rr, cc] - z[r0:r1, c0:c1]) / np.where(dist > 0, dist, 1.0)
        window = best[r0:r1, c0:c1]
        np.maximum(window, np.where(inside, ratio, -np.inf), out=window)

    angles = np.zeros((h, w))
    pos = best > 0
    angles[pos] = np.degrees(np.arctan(best[pos]))
    out = np.where(valid, angles, float(dem.nodata)).astype(np.float32)
    return dem.like(out)


def normalize_angle(field: Raster) -> Raster:
    """Map angles in [0, 90) onto [0, 1); nodata passes through."""
    v = field.band(0)
    valid = field.valid_mask(0)
    bad = valid & ((v < 0) | (v >= 90))
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueRangeError(f"angle outside [0, 90) at {idx}: {v[idx]}")
    out = np.where(valid, v / np.float32(90.0), np.float32(field.nodata)).astype(np.float32)
    return field.like(out)
