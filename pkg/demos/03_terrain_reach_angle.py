"""
Slope, release zones, and the potential angle of reach
======================================================

The reach angle at a pixel is the steepest elevation angle up to any
release-zone pixel within a search radius: high values mean an avalanche
starting above could plausibly reach this spot. Two implementations are
compared: a per-pixel brute scan and the windowed field used in production.
"""

import numpy as np

from avaseg import synth, terrain

dem = synth.synth_dem(seed=12, size=128)

# Horn-style slope in degrees
slope = terrain.slope_deg(dem)
print("slope range: %.1f .. %.1f deg" % (slope.band(0).min(), slope.band(0).max()))

# release zones are the 35..45 degree band
release = terrain.release_mask(slope)
n_rel = int(release.band(0).sum())
print("release pixels:", n_rel)

# the windowed field, radius-limited
par = terrain.par_field(dem, release, radius=2000.0)
print("reach angle range: %.1f .. %.1f deg" % (par.band(0).min(), par.band(0).max()))

# spot-check the field against the brute reference at a few pixels
rng = np.random.default_rng(0)
agree = all(
    par.band(0)[r, c] == np.float32(terrain.par_brute(dem, release, (r, c)))
    for r, c in zip(rng.integers(0, 128, 8), rng.integers(0, 128, 8))
)
print("matches brute scan at 8 random pixels:", agree)

# both angle rasters normalize to [0, 1] for the model
par_n = terrain.normalize_angle(par)
print("normalized reach angle max: %.3f" % par_n.band(0).max())
