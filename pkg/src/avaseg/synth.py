"""Deterministic synthetic scenes: DEM, SAR channel pair, debris labels.

Everything is derived from integer draws and dyadic-rational arithmetic:
elevations are quantized to 1/256 m, backscatter is synthesized in integer
units of 1/256 dB, and the final linear-power samples are quantized to
multiples of 2^-22 (exactly representable in float32). The generator is
therefore a pure function of (seed, parameters) down to the byte level.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from . import terrain
from .errors import PlacementError, ValueRangeError
from .raster import Raster, RasterGrid, SceneStack, default_grid

DB_QUANT = 256  # integer units per dB
UPLIFT_DB = (3.0, 8.0)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream]))


def synth_dem(seed: int, size: int | tuple[int, int] = 320,
              relief: float = 500.0, spacing: float = 20.0,
              nodata: float = -9999.0) -> Raster:
    """Terrain from seeded raised-cosine bumps, quantized to 1/256 m.

    One bump is pinned steep enough that the slope field reaches past the
    release band for any nonzero relief; the rest are drawn from the seed.
    """
    if isinstance(size, int):
        h = w = size
    else:
        h, w = size
    if relief < 0:
        raise ValueRangeError(f"relief must be >= 0, got {relief}")
    rng = _rng(seed, 0xD)
    yy = (np.arange(h, dtype=np.float64) * spacing)[:, np.newaxis]
    xx = (np.arange(w, dtype=np.float64) * spacing)[np.newaxis, :]
    z = np.zeros((h, w), dtype=np.float64)

    def bump(cy, cx, radius, amp):
        d = np.hypot(yy - cy, xx - cx)
        inside = d < radius
        zb = np.zeros_like(z)
        zb[inside] = amp * np.cos(np.pi * d[inside] / (2.0 * radius)) ** 2
        return zb

    if relief > 0:
        # pinned bump: peak radial gradient of amp*cos^2(pi d / 2R) is
        # amp*pi/(2R) at d = R/2; choose R so that reaches tan(58 deg)
        amp0 = 0.9 * relief
        r0 = amp0 * np.pi / (2.0 * np.tan(np.radians(58.0)))
        cy0 = (0.3 + 0.4 * rng.random()) * h * spacing
        cx0 = (0.3 + 0.4 * rng.random()) * w * spacing
        z += bump(cy0, cx0, r0, amp0)
        n_extra = max(3, (h * w) // 16384)
        for _ in range(n_extra):
            amp = relief * (0.2 + 0.6 * rng.random())
            radius = spacing * (12.0 + 30.0 * rng.random())
            cy = rng.random() * h * spacing
            cx = rng.random() * w * spacing
            z += bump(cy, cx, radius, amp)
    zq = np.round(z * 256.0) / 256.0
    return Raster(default_grid(w, h, spacing, nodata=nodata), zq.astype(np.float32))


def _dyadic_noise(rng: np.random.Generator, h: int, w: int, amp_units: int,
                  cell: int = 8) -> np.ndarray:
    """Smooth int64 noise field: coarse integer lattice, bilinear in eighths.

    All weights are multiples of 1/cell and all values integers, so the
    interpolation is exact in float64 and the rounding is deterministic.
    """
    hc = (h - 1) // cell + 2
    wc = (w - 1) // cell + 2
    coarse = rng.integers(-amp_units, amp_units + 1, size=(hc, wc)).astype(np.float64)
    ii = np.arange(h)
    jj = np.arange(w)
    i0 = ii // cell
    j0 = jj // cell
    ty = ((ii % cell) / cell)[:, np.newaxis]
    tx = ((jj % cell) / cell)[np.newaxis, :]
    v00 = coarse[np.ix_(i0, j0)]
    v01 = coarse[np.ix_(i0, j0 + 1)]
    v10 = coarse[np.ix_(i0 + 1, j0)]
    v11 = coarse[np.ix_(i0 + 1, j0 + 1)]
    f = ((1 - ty) * (1 - tx) * v00 + (1 - ty) * tx * v01
         + ty * (1 - tx) * v10 + ty * tx * v11)
    return np.round(f).astype(np.int64)


def _disk_offsets(radius: int) -> np.ndarray:
    span = np.arange(-radius, radius + 1)
    dr, dc = np.meshgrid(span, span, indexing="ij")
    keep = dr * dr + dc * dc <= radius * radius
    return np.stack([dr[keep], dc[keep]], axis=1)


def _downhill_path(z: np.ndarray, start: tuple[int, int], max_steps: int) -> list:
    h, w = z.shape
    r, c = start
    path = [(r, c)]
    for _ in range(max_steps):
        best = None
        bz = z[r, c]
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and z[rr, cc] < bz:
                    bz = z[rr, cc]
                    best = (rr, cc)
        if best is None:
            break
        r, c = best
        path.append(best)
    return path


def _stamp_path(path: list, radius: int, shape: tuple[int, int]) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    offs = _disk_offsets(radius)
    h, w = shape
    for (r, c) in path:
        rr = offs[:, 0] + r
        cc = offs[:, 1] + c
        ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        mask[rr[ok], cc[ok]] = True
    return mask


def place_debris(dem: Raster, n_avalanches: int, seed: int,
                 min_pixels: int = 40) -> np.ndarray:
    """Plant n separated debris regions by walking downhill from release pixels.

    Returns a boolean mask with exactly n 8-connected components. Raises
    PlacementError when the terrain cannot host that many.
    """
    if n_avalanches == 0:
        return np.zeros(dem.shape, dtype=bool)
    slope = terrain.slope_deg(dem)
    release = terrain.release_mask(slope)
    sites = np.argwhere(release.band(0) == 1)
    if sites.shape[0] == 0:
        raise PlacementError("no release pixels in the DEM")
    rng = _rng(seed, 0xA11)
    order = rng.permutation(sites.shape[0])
    z = dem.band(0)
    occupied = np.zeros(dem.shape, dtype=bool)
    placed = 0
    for k in order:
        if placed == n_avalanches:
            break
        start = tuple(int(v) for v in sites[k])
        steps = int(rng.integers(20, 46))
        radius = int(rng.integers(2, 4))
        path = _downhill_path(z, start, steps)
        cand = _stamp_path(path, radius, dem.shape)
        if int(cand.sum()) < min_pixels:
            continue
        grown = ndimage.binary_dilation(occupied, structure=np.ones((3, 3), dtype=bool))
        if (cand & grown).any():
            continue
        occupied |= cand
        placed += 1
    if placed < n_avalanches:
        raise PlacementError(
            f"could only place {placed} of {n_avalanches} debris regions")
    return occupied


def synth_scene(seed: int, dem: Raster, n_avalanches: int) -> SceneStack:
    """Reference/activity channel pair (linear power) with planted debris.

    The activity channels repeat the reference backscatter pattern with an
    extra +3..8 dB inside each debris region; independent per-acquisition
    noise rides on both. Labels mark the debris pixels.
    """
    h, w = dem.shape
    labels = place_debris(dem, n_avalanches, seed)

    rng_pat = _rng(seed, 0xB5)
    rng_noise = _rng(seed, 0xC7)
    smooth_vv = 2 * _dyadic_noise(rng_pat, h, w, 512)
    smooth_vh = 2 * _dyadic_noise(rng_pat, h, w, 512)
    uplift_vv = np.zeros((h, w), dtype=np.int64)
    uplift_vh = np.zeros((h, w), dtype=np.int64)
    if n_avalanches:
        lab_ids, n_found = ndimage.label(labels, structure=np.ones((3, 3), dtype=bool))
        for comp in range(1, n_found + 1):
            u = int(rng_pat.integers(int(UPLIFT_DB[0] * DB_QUANT),
                                     int(UPLIFT_DB[1] * DB_QUANT) + 1))
            sel = lab_ids == comp
            uplift_vv[sel] = u
            uplift_vh[sel] = (u * 205) // 256

    def white():
        return rng_noise.integers(-64, 65, size=(h, w))

    base_vv = -18 * DB_QUANT
    base_vh = int(-20.5 * DB_QUANT)
    units = {
        "vv_ref": base_vv + smooth_vv + white(),
        "vv_act": base_vv + smooth_vv + uplift_vv + white(),
        "vh_ref": base_vh + smooth_vh + white(),
        "vh_act": base_vh + smooth_vh + uplift_vh + white(),
    }

    def to_linear(u: np.ndarray) -> np.ndarray:
        db = u.astype(np.float64) / DB_QUANT
        linear = 10.0 ** (db / 10.0)
        # quantize to 2^-22 so the float32 cast is exact and platform-free
        return (np.round(linear * 4194304.0) / 4194304.0).astype(np.float32)

    grid = dem.grid
    rasters = {k: Raster(grid, to_linear(v)) for k, v in units.items()}
    lab_raster = Raster(grid, labels.astype(np.float32))
    return SceneStack(vv_ref=rasters["vv_ref"], vv_act=rasters["vv_act"],
                      vh_ref=rasters["vh_ref"], vh_act=rasters["vh_act"],
                      dem=dem, labels=lab_raster)
