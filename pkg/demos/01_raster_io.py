"""
Raster containers and the AVRS on-disk format
=============================================

Build a small multi-band raster, write it to disk, read it back, and
coarsen it while ignoring nodata holes.
"""

import tempfile
from pathlib import Path

import numpy as np

from avaseg.raster import Raster, default_grid, downsample2x_mean, read_raster, write_raster

# a 20 m north-up grid; nodata defaults to -9999
grid = default_grid(width=8, height=6, spacing=20.0)
print("geotransform:", grid.geotransform)

# two bands of float32 data with one nodata hole punched in band 0
data = np.arange(2 * 6 * 8, dtype=np.float32).reshape(2, 6, 8) / 4.0
data[0, 0, 0] = grid.nodata
r = Raster(grid, data)
print("shape:", r.shape, "bands:", r.bands)

# round trip through the little-endian single-file format
out = Path(tempfile.mkdtemp()) / "demo.avrs"
write_raster(r, out)
back = read_raster(out)
print("file size:", out.stat().st_size, "bytes")
print("round trip identical:", np.array_equal(back.data, r.data))

# 2x mean downsampling works on single-band rasters: valid pixels in each
# 2x2 block are averaged, so the hole only drops out of its own block's mean
band0 = Raster(grid, r.band(0))
small = downsample2x_mean(band0)
print("downsampled shape:", small.shape)
print("block with the hole:", float(small.band(0)[0, 0]), "(mean of 3 pixels)")
print("full block:        ", float(small.band(0)[0, 1]), "(mean of 4 pixels)")
