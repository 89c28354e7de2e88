import math

import numpy as np
import pytest

from avaseg.raster import Raster, default_grid
from avaseg.terrain import (normalize_angle, par_brute, par_field,
                            release_mask, slope_deg)

ND = -9999.0


def dem_raster(z, spacing=20.0):
    z = np.asarray(z, dtype=np.float32)
    g = default_grid(z.shape[-1], z.shape[-2], spacing=spacing)
    return Raster(g, z)


def mask_like(dem, rows_cols):
    m = np.zeros(dem.shape, np.float32)
    for r, c in rows_cols:
        m[r, c] = 1.0
    return Raster(dem.grid, m)


# ---- slope ----

def test_slope_of_plane_is_45deg():
    # z rises 1 m per 1 m of easting
    g = default_grid(8, 8, spacing=1.0)
    cols = np.arange(8, dtype=np.float32)
    dem = Raster(g, np.broadcast_to(cols, (8, 8)).copy())
    s = slope_deg(dem).band(0)
    assert np.allclose(s[1:-1, 1:-1], 45.0, atol=1e-4)


def test_slope_of_constant_is_zero():
    dem = dem_raster(np.full((6, 6), 123.0, np.float32))
    assert np.all(slope_deg(dem).band(0) == 0.0)


def test_slope_central_difference_oracle():
    # smooth surface: Horn and plain central differences agree well inside
    r = np.arange(16, dtype=np.float64)
    yy, xx = np.meshgrid(r, r, indexing="ij")
    z = 40.0 * np.sin(xx / 5.0) + 30.0 * np.cos(yy / 6.0) + 0.5 * xx * yy / 15.0
    dem = dem_raster(z.astype(np.float32), spacing=20.0)
    got = slope_deg(dem).band(0)
    for i in range(2, 14):
        for j in range(2, 14):
            dzdx = (z[i, j + 1] - z[i, j - 1]) / 40.0
            dzdy = (z[i + 1, j] - z[i - 1, j]) / 40.0
            want = math.degrees(math.atan(math.hypot(dzdx, dzdy)))
            assert abs(float(got[i, j]) - want) < 0.5, (i, j)


def test_slope_nodata_window_propagates():
    z = np.full((5, 5), 10.0, np.float32)
    z[2, 2] = ND
    s = slope_deg(dem_raster(z)).band(0)
    # every pixel whose 3x3 window touches the hole goes nodata
    assert np.all(s[1:4, 1:4] == np.float32(ND))
    assert s[0, 0] == 0.0


def test_slope_range_is_sub_90():
    rng = np.random.default_rng(2)
    dem = dem_raster((rng.random((12, 12)) * 4000).astype(np.float32))
    s = slope_deg(dem).band(0)
    assert (s >= 0).all() and (s < 90).all()


# ---- release mask ----

def test_release_band_membership():
    s = dem_raster(np.array([[40.0, 20.0], [35.0, 45.0]], np.float32))
    m = release_mask(s).band(0)
    assert m[0, 0] == 1 and m[0, 1] == 0
    assert m[1, 0] == 1 and m[1, 1] == 1  # inclusive endpoints


def test_release_nodata():
    s = dem_raster(np.array([[ND, 40.0]], np.float32))
    m = release_mask(s).band(0)
    assert m[0, 0] == np.float32(ND) and m[0, 1] == 1


# ---- PAR ----

def test_par_brute_single_release_45deg():
    # release pixel 100 m above the target, 100 m away horizontally
    z = np.zeros((1, 6), np.float32)
    z[0, 5] = 100.0
    dem = dem_raster(z, spacing=20.0)
    release = mask_like(dem, [(0, 5)])
    assert par_brute(dem, release, (0, 0)) == pytest.approx(45.0, abs=1e-6)


def test_par_brute_empty_release_is_zero():
    dem = dem_raster(np.zeros((4, 4), np.float32))
    release = mask_like(dem, [])
    assert par_brute(dem, release, (2, 2)) == 0.0


def test_par_brute_release_below_clamps_to_zero():
    z = np.zeros((1, 4), np.float32)
    z[0, 0] = 50.0
    dem = dem_raster(z, spacing=20.0)
    release = mask_like(dem, [(0, 3)])  # 50 m below the target at (0,0)
    assert par_brute(dem, release, (0, 0)) == 0.0


def test_par_brute_takes_the_max_angle():
    z = np.zeros((1, 5), np.float32)
    z[0, 2] = 20.0   # atan(20/40) at (0,0)
    z[0, 4] = 100.0  # atan(100/80), steeper
    dem = dem_raster(z, spacing=20.0)
    release = mask_like(dem, [(0, 2), (0, 4)])
    want = math.degrees(math.atan(100.0 / 80.0))
    assert par_brute(dem, release, (0, 0)) == pytest.approx(want, abs=1e-9)


def _random_case(rng, n=64, spacing=20.0):
    z = (rng.random((n, n)) * 800).astype(np.float32)
    dem = dem_raster(z, spacing=spacing)
    rel = (rng.random((n, n)) < 0.05).astype(np.float32)
    return dem, Raster(dem.grid, rel)


def test_par_field_equals_brute_exactly():
    rng = np.random.default_rng(0)
    dem, release = _random_case(rng, n=48)
    diag = math.hypot(48 * 20.0, 48 * 20.0)
    field = par_field(dem, release, radius=diag + 1).band(0)
    for r, c in [(0, 0), (0, 47), (47, 0), (24, 24), (3, 40), (40, 3)]:
        assert field[r, c] == np.float32(par_brute(dem, release, (r, c))), (r, c)
    # and densely on a sub-block
    for r in range(10, 14):
        for c in range(20, 24):
            assert field[r, c] == np.float32(par_brute(dem, release, (r, c)))


def test_par_field_flat_dem_no_release_is_zero():
    dem = dem_raster(np.zeros((16, 16), np.float32))
    rel = release_mask(slope_deg(dem))
    out = par_field(dem, rel).band(0)
    assert np.all(out == 0.0)


def test_par_field_release_pixel_itself_excluded():
    # a lone release pixel sees nothing above it -> 0 at its own location
    z = np.zeros((3, 3), np.float32)
    z[1, 1] = 10.0
    dem = dem_raster(z)
    release = mask_like(dem, [(1, 1)])
    assert par_field(dem, release).band(0)[1, 1] == 0.0


def test_par_translation_invariance_exact():
    rng = np.random.default_rng(5)
    # heights on a 1/256 lattice so adding 512 is exact in f32
    z = np.round(rng.random((20, 20)) * 200 * 256) / 256
    dem = dem_raster(z.astype(np.float32))
    rel = Raster(dem.grid, (rng.random((20, 20)) < 0.1).astype(np.float32))
    a = par_field(dem, rel).band(0)
    dem2 = Raster(dem.grid, dem.band(0) + np.float32(512.0))
    b = par_field(dem2, rel).band(0)
    assert np.array_equal(a, b)


def test_par_height_scaling_increases_angles():
    rng = np.random.default_rng(8)
    dem, release = _random_case(rng, n=24)
    a = par_field(dem, release).band(0)
    dem2 = Raster(dem.grid, dem.band(0) * np.float32(2))
    b = par_field(dem2, release).band(0)
    active = (a > 0) & (a < 90)
    assert active.any()
    assert (b[active] > a[active]).all()


def test_par_monotone_in_radius():
    rng = np.random.default_rng(13)
    dem, release = _random_case(rng, n=32)
    small = par_field(dem, release, radius=100.0).band(0)
    big = par_field(dem, release, radius=2000.0).band(0)
    assert (big >= small).all()


# ---- angle normalization ----

def test_normalize_angle_values():
    f = dem_raster(np.array([[45.0, 0.0, ND]], np.float32))
    out = normalize_angle(f).band(0)
    assert out[0, 0] == np.float32(0.5)
    assert out[0, 1] == 0.0
    assert out[0, 2] == np.float32(ND)


def test_normalize_angle_rejects_out_of_range():
    from avaseg.errors import ValueRangeError

    with pytest.raises(ValueRangeError):
        normalize_angle(dem_raster(np.array([[90.0]], np.float32)))
    with pytest.raises(ValueRangeError):
        normalize_angle(dem_raster(np.array([[-1.0]], np.float32)))
