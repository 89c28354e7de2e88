"""SAR change-detection and terrain-aware segmentation of snow-avalanche debris."""

import os as _os

# honor AVA_THREADS before the first numpy import pulls in the BLAS runtime
_threads = _os.environ.get("AVA_THREADS")
if _threads:
    for _key in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_key, _threads)
del _os, _threads

__version__ = "0.1.0"

from .errors import (
    AlignmentError,
    AvaError,
    CorruptFileError,
    DegenerateDatasetError,
    DimensionError,
    InvariantError,
    PlacementError,
    RasterFormatError,
    TrainingDivergedError,
    ValueRangeError,
)
from .raster import (
    Raster,
    RasterGrid,
    SceneStack,
    assert_aligned,
    default_grid,
    downsample2x_mean,
    load_scene,
    read_raster,
    save_scene,
    write_raster,
)

__all__ = [
    "AvaError", "RasterFormatError", "CorruptFileError", "InvariantError",
    "AlignmentError", "DimensionError", "ValueRangeError",
    "DegenerateDatasetError", "TrainingDivergedError", "PlacementError",
    "Raster", "RasterGrid", "SceneStack", "assert_aligned", "default_grid",
    "downsample2x_mean", "load_scene", "read_raster", "save_scene",
    "write_raster",
]
