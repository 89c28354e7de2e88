"""
From binary masks to filtered GeoJSON debris polygons
=====================================================

Connected components of a mask become debris segments with terrain
statistics; implausible ones are rejected with a recorded reason, and the
survivors export as polygons in world coordinates.
"""

import json
import tempfile
from pathlib import Path

from avaseg import synth, terrain
from avaseg.segments import (FilterCriteria, connected_components, export_geojson,
                             filter_segments, segment_stats)

dem = synth.synth_dem(seed=9, size=160)
scene = synth.synth_scene(seed=9, dem=dem, n_avalanches=4)

# use the ground-truth labels as a stand-in for a thresholded prediction
segs = connected_components(scene.labels, connectivity=8)
print("segments found:", len(segs))

# attach elevation and reach-angle statistics
slope = terrain.slope_deg(dem)
release = terrain.release_mask(slope)
par = terrain.par_field(dem, release, radius=2000.0)
for s in segs:
    segment_stats(s, scene.labels.grid, dem=dem, par=par)
    print(f"  id={s.id} pixels={s.pixel_count} area={s.area_m2:.0f} m2 "
          f"elev={s.mean_elev:.0f} m reach={s.max_par:.1f} deg")

# drop anything smaller than 20 pixels at 20 m spacing
kept, rejected = filter_segments(segs, FilterCriteria(min_area_m2=8000.0))
print("kept:", len(kept), " rejected:", [(s.id, why) for s, why in rejected])

out = Path(tempfile.mkdtemp()) / "debris.geojson"
export_geojson(kept, scene.labels.grid, out, rejected=rejected)
doc = json.loads(out.read_text())
print("features written:", len(doc["features"]), "->", out)
