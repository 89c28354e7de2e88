"""Georeferenced raster container, AVRS file format, and grid utilities.

A Raster is an immutable stack of float32 bands on a north-up projected grid.
Nodata is a concrete float value compared exactly; NaN is never a legal
sentinel, so equality of rasters is plain byte equality.

AVRS container layout (little-endian):

    offset  size  field
    0       4     magic "AVRS"
    4       2     version u16 = 1
    6       2     flags u16 = 0
    8       4     width u32
    12      4     height u32
    16      2     bands u16
    18      1     dtype u8 = 0 (float32)
    19      1     pad u8 = 0
    20      48    geotransform 6 x f64
    68      8     nodata f64
    76      52    zero padding to the 64-byte boundary (header = 128 bytes)
    128     -     band-sequential row-major float32 samples
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AlignmentError,
    CorruptFileError,
    DimensionError,
    InvariantError,
    RasterFormatError,
)

MAGIC = b"AVRS"
VERSION = 1
DTYPE_F32 = 0
HEADER_SIZE = 128
_HEADER_STRUCT = struct.Struct("<4sHHIIHBB6dd")

DEFAULT_NODATA = -9999.0


@dataclass(frozen=True)
class RasterGrid:
    """Pixel grid geometry: size, affine geotransform, and the nodata value.

    The geotransform is (origin_x, pixel_dx, row_rot, origin_y, col_rot,
    pixel_dy) in projected meters. Only north-up grids are supported, so the
    rotation terms must be zero, pixel_dx > 0, and pixel_dy < 0.
    """

    width: int
    height: int
    geotransform: tuple[float, float, float, float, float, float]
    nodata: float = DEFAULT_NODATA

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvariantError(f"grid size must be positive, got {self.width}x{self.height}")
        gt = tuple(float(v) for v in self.geotransform)
        if len(gt) != 6:
            raise InvariantError("geotransform must have 6 entries")
        object.__setattr__(self, "geotransform", gt)
        object.__setattr__(self, "nodata", float(self.nodata))
        if not np.isfinite(gt).all():
            raise InvariantError("geotransform entries must be finite")
        if gt[1] <= 0:
            raise InvariantError(f"pixel_dx must be > 0, got {gt[1]}")
        if gt[5] >= 0:
            raise InvariantError(f"pixel_dy must be < 0, got {gt[5]}")
        if gt[2] != 0.0 or gt[4] != 0.0:
            raise InvariantError("rotated geotransforms are not supported")
        if not np.isfinite(self.nodata):
            raise InvariantError("nodata must be a finite float (NaN is not allowed)")

    @property
    def origin_x(self) -> float:
        return self.geotransform[0]

    @property
    def origin_y(self) -> float:
        return self.geotransform[3]

    @property
    def pixel_dx(self) -> float:
        return self.geotransform[1]

    @property
    def pixel_dy(self) -> float:
        return self.geotransform[5]

    def pixel_center(self, row: int, col: int) -> tuple[float, float]:
        """World coordinates of a pixel center."""
        x = self.origin_x + (col + 0.5) * self.pixel_dx
        y = self.origin_y + (row + 0.5) * self.pixel_dy
        return x, y

    def pixel_corner(self, row: float, col: float) -> tuple[float, float]:
        """World coordinates of the grid corner at (row, col) pixel edges."""
        return self.origin_x + col * self.pixel_dx, self.origin_y + row * self.pixel_dy

    def with_size(self, width: int, height: int, scale: float = 1.0) -> "RasterGrid":
        gt = self.geotransform
        new_gt = (gt[0], gt[1] * scale, 0.0, gt[3], 0.0, gt[5] * scale)
        return RasterGrid(width, height, new_gt, self.nodata)

    def shifted(self, row: int, col: int, width: int, height: int) -> "RasterGrid":
        """Sub-grid whose origin is at pixel (row, col) of this grid."""
        gt = self.geotransform
        new_gt = (gt[0] + col * gt[1], gt[1], 0.0, gt[3] + row * gt[5], 0.0, gt[5])
        return RasterGrid(width, height, new_gt, self.nodata)


def default_grid(width: int, height: int, spacing: float = 20.0,
                 origin: tuple[float, float] = (4.6e5, 7.6e6),
                 nodata: float = DEFAULT_NODATA) -> RasterGrid:
    """North-up UTM-style grid with square pixels of the given spacing."""
    gt = (origin[0], spacing, 0.0, origin[1], 0.0, -spacing)
    return RasterGrid(width, height, gt, nodata)


class Raster:
    """Immutable multiband float32 raster on a RasterGrid.

    data has shape (bands, height, width); every sample that is not exactly
    the nodata value must be finite.
    """

    __slots__ = ("grid", "data")

    def __init__(self, grid: RasterGrid, data: np.ndarray):
        arr = np.ascontiguousarray(data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[np.newaxis, :, :]
        if arr.ndim != 3:
            raise InvariantError(f"raster data must be 2D or 3D, got {arr.ndim}D")
        if arr.shape[1] != grid.height or arr.shape[2] != grid.width:
            raise InvariantError(
                f"data shape {arr.shape} does not match grid {grid.height}x{grid.width}")
        if arr.shape[0] < 1:
            raise InvariantError("raster must have at least one band")
        bad = ~np.isfinite(arr) & (arr != np.float32(grid.nodata))
        if bad.any():
            idx = np.argwhere(bad)[0]
            raise InvariantError(
                f"non-finite sample at band={idx[0]} row={idx[1]} col={idx[2]}")
        arr.setflags(write=False)
        self.grid = grid
        self.data = arr

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.height, self.grid.width

    @property
    def nodata(self) -> float:
        return self.grid.nodata

    def band(self, i: int = 0) -> np.ndarray:
        return self.data[i]

    def valid_mask(self, band: int | None = None) -> np.ndarray:
        """Boolean mask of non-nodata samples (all bands must be valid if band is None)."""
        nd = np.float32(self.nodata)
        if band is not None:
            return self.data[band] != nd
        return (self.data != nd).all(axis=0)

    def values(self, band: int = 0) -> np.ndarray:
        """Valid samples of one band as a 1D array."""
        b = self.data[band]
        return b[b != np.float32(self.nodata)]

    def like(self, data: np.ndarray) -> "Raster":
        """New raster with the same grid and fresh data."""
        return Raster(self.grid, data)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Raster):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.data, other.data)

    def __repr__(self) -> str:
        return f"Raster(bands={self.bands}, height={self.grid.height}, width={self.grid.width})"


def write_raster(raster: Raster, path) -> None:
    """Write a raster in the AVRS format. Output bytes are a pure function of the input."""
    header = _HEADER_STRUCT.pack(
        MAGIC, VERSION, 0,
        raster.grid.width, raster.grid.height, raster.bands, DTYPE_F32, 0,
        *raster.grid.geotransform, raster.grid.nodata,
    )
    header = header + b"\x00" * (HEADER_SIZE - len(header))
    payload = raster.data.astype("<f4", copy=False).tobytes()
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(payload)
    except OSError as exc:
        raise OSError(f"cannot write raster to {path}: {exc}") from exc


def read_raster(path) -> Raster:
    """Read an AVRS raster, checking magic, version, and payload size."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read raster from {path}: {exc}") from exc
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise RasterFormatError(f"{path}: not an AVRS file (bad magic)")
    if len(blob) < HEADER_SIZE:
        raise CorruptFileError(f"{path}: truncated header ({len(blob)} bytes)")
    (_, version, _flags, width, height, bands, dtype, _pad,
     g0, g1, g2, g3, g4, g5, nodata) = _HEADER_STRUCT.unpack_from(blob, 0)
    if version != VERSION:
        raise RasterFormatError(f"{path}: unsupported AVRS version {version}")
    if dtype != DTYPE_F32:
        raise RasterFormatError(f"{path}: unsupported dtype code {dtype}")
    expected = width * height * bands * 4
    payload = blob[HEADER_SIZE:]
    if len(payload) != expected:
        raise CorruptFileError(
            f"{path}: payload is {len(payload)} bytes, header declares {expected}")
    grid = RasterGrid(width, height, (g0, g1, g2, g3, g4, g5), nodata)
    data = np.frombuffer(payload, dtype="<f4").reshape(bands, height, width)
    return Raster(grid, data.astype(np.float32))


def assert_aligned(rasters) -> None:
    """Raise AlignmentError naming the first mismatching grid field."""
    rasters = list(rasters)
    if len(rasters) < 2:
        return
    ref = rasters[0].grid
    for k, r in enumerate(rasters[1:], start=1):
        g = r.grid
        for fieldname in ("width", "height", "geotransform", "nodata"):
            if getattr(g, fieldname) != getattr(ref, fieldname):
                raise AlignmentError(
                    f"raster {k} differs from raster 0 in {fieldname}: "
                    f"{getattr(g, fieldname)!r} != {getattr(ref, fieldname)!r}")


def downsample2x_mean(raster: Raster) -> Raster:
    """Halve resolution by averaging 2x2 blocks, ignoring nodata.

    Blocks that are entirely nodata stay nodata. Pixel sizes double; the
    origin is unchanged. Requires a single band and even dimensions.
    """
    if raster.bands != 1:
        raise DimensionError(f"downsample expects a single band, got {raster.bands}")
    h, w = raster.shape
    if h % 2 or w % 2:
        raise DimensionError(f"dimensions must be even, got {h}x{w}")
    v = raster.band(0)
    valid = v != np.float32(raster.nodata)
    vz = np.where(valid, v, np.float32(0)).astype(np.float64)
    c = valid.astype(np.float64)
    # fixed left-to-right, row-major accumulation order within each block
    s = ((vz[0::2, 0::2] + vz[0::2, 1::2]) + vz[1::2, 0::2]) + vz[1::2, 1::2]
    n = ((c[0::2, 0::2] + c[0::2, 1::2]) + c[1::2, 0::2]) + c[1::2, 1::2]
    with np.errstate(invalid="ignore"):
        mean = np.where(n > 0, s / np.maximum(n, 1.0), raster.nodata)
    out = mean.astype(np.float32)
    out[n == 0] = np.float32(raster.nodata)
    grid = raster.grid.with_size(w // 2, h // 2, scale=2.0)
    return Raster(grid, out)


@dataclass(frozen=True)
class SceneStack:
    """Aligned VV/VH reference+activity channels, DEM, and optional labels.

    Channel rasters may hold linear backscatter power, dB, or unit-scaled
    values; the interpretation travels in the scene manifest, not here.
    """

    vv_ref: Raster
    vv_act: Raster
    vh_ref: Raster
    vh_act: Raster
    dem: Raster
    labels: Raster | None = None

    def __post_init__(self):
        rasters = [self.vv_ref, self.vv_act, self.vh_ref, self.vh_act, self.dem]
        if self.labels is not None:
            rasters.append(self.labels)
        for r in rasters:
            if r.bands != 1:
                raise InvariantError("scene channels must be single-band")
        assert_aligned(rasters)
        if self.labels is not None:
            lab = self.labels.band(0)
            nd = np.float32(self.labels.nodata)
            ok = (lab == 0) | (lab == 1) | (lab == nd)
            if not ok.all():
                bad = np.argwhere(~ok)[0]
                raise InvariantError(
                    f"labels must be 0, 1, or nodata; found {lab[tuple(bad)]} at {tuple(bad)}")

    @property
    def grid(self) -> RasterGrid:
        return self.vv_ref.grid

    def channels(self) -> dict[str, Raster]:
        out = {"vv_ref": self.vv_ref, "vv_act": self.vv_act,
               "vh_ref": self.vh_ref, "vh_act": self.vh_act}
        return out


_SCENE_FILES = ("vv_ref", "vv_act", "vh_ref", "vh_act", "dem", "labels")


def save_scene(scene: SceneStack, directory, meta: dict | None = None) -> None:
    """Write a SceneStack directory: one AVRS per channel plus scene.json."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {}
    for name in _SCENE_FILES:
        r = getattr(scene, name)
        if r is None:
            continue
        write_raster(r, d / f"{name}.avrs")
        files[name] = f"{name}.avrs"
    manifest = {"format_version": 1, "files": files}
    if meta:
        manifest.update(meta)
    (d / "scene.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_scene(directory) -> tuple[SceneStack, dict]:
    """Read a SceneStack directory written by save_scene; returns (scene, manifest)."""
    d = Path(directory)
    manifest_path = d / "scene.json"
    if not manifest_path.exists():
        raise CorruptFileError(f"{d}: missing scene.json")
    manifest = json.loads(manifest_path.read_text())
    files = manifest.get("files", {})
    loaded = {}
    for name in _SCENE_FILES:
        if name in files:
            loaded[name] = read_raster(d / files[name])
        elif name != "labels":
            raise CorruptFileError(f"{d}: scene.json lists no {name} raster")
    scene = SceneStack(
        vv_ref=loaded["vv_ref"], vv_act=loaded["vv_act"],
        vh_ref=loaded["vh_ref"], vh_act=loaded["vh_act"],
        dem=loaded["dem"], labels=loaded.get("labels"),
    )
    return scene, manifest
