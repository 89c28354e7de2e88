"""
SAR change features from a reference/activity image pair
========================================================

Debris roughens the snow surface and raises backscatter in the later
(activity) acquisition. Convert linear power to clipped decibels, rescale
to [0, 1], and form the three change channels the model consumes.
"""

import tempfile
from pathlib import Path

import dataclasses
import numpy as np

from avaseg import synth
from avaseg.radiometry import change_features, rescale_unit, rgb_composite, to_db_clip

# a synthetic scene: four linear-power channels plus DEM and debris labels
dem = synth.synth_dem(seed=5, size=160)
scene = synth.synth_scene(seed=5, dem=dem, n_avalanches=3)

# linear power -> dB clipped to [-25, -5] -> unit scale
unit = dataclasses.replace(scene, **{
    name: rescale_unit(to_db_clip(getattr(scene, name)))
    for name in ("vv_ref", "vv_act", "vh_ref", "vh_act")
})

# d_vv and d_vh store (difference + 1) / 2 so 0.5 means "no change";
# vvvh is the squared product of the two raw differences
feats = change_features(unit)
labels = scene.labels.band(0)
for name in ("d_vv", "d_vh", "vvvh"):
    band = getattr(feats, name).band(0)
    print(f"{name}: debris mean {band[labels == 1].mean():.3f}  "
          f"background mean {band[labels == 0].mean():.3f}")

# a quick-look composite: reference in magenta, activity in green, so new
# debris shows up green
png = Path(tempfile.mkdtemp()) / "change.png"
rgb_composite(unit.vv_ref, unit.vv_act, png)
print("wrote", png)
