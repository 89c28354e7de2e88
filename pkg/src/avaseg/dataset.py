"""Model-input assembly: feature stacks, patch extraction, augmentation,
class statistics, and scene-level train/validation splitting.

Patches are stored as 7-band AVRS rasters (five features, label, validity)
so nothing depends on in-memory state between pipeline stages. The JSON
manifest records patch locations, per-patch pixel counts, class totals,
and the split assignment per scene.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DegenerateDatasetError, DimensionError, ValueRangeError
from .raster import Raster, RasterGrid, SceneStack, assert_aligned, read_raster, write_raster
from . import radiometry, terrain

PATCH_SIZE = 160
NEG_KEEP_RATE = 0.1
POS_WEIGHT_CAP = 500.0
SHIFT_MAX_PX = 16
ZOOM_RANGE = (0.9, 1.1)
SHEAR_MAX_DEG = 5.0

PATCH_BANDS = ("d_vv", "d_vh", "vvvh", "slope_n", "par_n", "label", "valid")
TRANSFORMS = ("hflip", "vflip", "rot90", "rot180", "rot270", "shift", "zoom", "shear")


@dataclass(frozen=True)
class FeatureStack:
    """The five unit-range model inputs on a shared grid."""

    d_vv: Raster
    d_vh: Raster
    vvvh: Raster
    slope_n: Raster
    par_n: Raster

    def __post_init__(self):
        rs = [self.d_vv, self.d_vh, self.vvvh, self.slope_n, self.par_n]
        assert_aligned(rs)
        for name, r in zip(("d_vv", "d_vh", "vvvh", "slope_n", "par_n"), rs):
            vals = r.values()
            if vals.size and (vals.min() < 0 or vals.max() > 1):
                raise ValueRangeError(f"feature {name} outside [0,1]")

    @property
    def grid(self) -> RasterGrid:
        return self.d_vv.grid

    def rasters(self) -> tuple[Raster, ...]:
        return (self.d_vv, self.d_vh, self.vvvh, self.slope_n, self.par_n)

    def array(self) -> np.ndarray:
        """(5, H, W) float32 with nodata resolved to 0."""
        out = np.stack([r.band(0) for r in self.rasters()])
        out = np.where(self.valid()[np.newaxis], out, np.float32(0))
        return out.astype(np.float32)

    def valid(self) -> np.ndarray:
        """(H, W) bool, true where all five features are valid."""
        m = self.rasters()[0].valid_mask(0)
        for r in self.rasters()[1:]:
            m = m & r.valid_mask(0)
        return m


def build_feature_stack(scene: SceneStack, encoding: str = "linear",
                        band: tuple[float, float] = terrain.RELEASE_BAND,
                        radius: float = terrain.PAR_RADIUS) -> FeatureStack:
    """Run radiometry and terrain on a scene to produce the model inputs.

    encoding says what the channel rasters hold: raw linear power, dB, or
    already unit-scaled values.
    """
    if encoding not in ("linear", "db", "unit"):
        raise ValueRangeError(f"unknown channel encoding {encoding!r}")

    def unit(r: Raster) -> Raster:
        if encoding == "linear":
            r = radiometry.to_db_clip(r)
        if encoding in ("linear", "db"):
            r = radiometry.rescale_unit(r)
        return r

    scaled = SceneStack(
        vv_ref=unit(scene.vv_ref), vv_act=unit(scene.vv_act),
        vh_ref=unit(scene.vh_ref), vh_act=unit(scene.vh_act),
        dem=scene.dem, labels=scene.labels,
    )
    trip = radiometry.change_features(scaled)
    slope = terrain.slope_deg(scene.dem)
    release = terrain.release_mask(slope, band)
    par = terrain.par_field(scene.dem, release, radius)
    return FeatureStack(
        d_vv=trip.d_vv, d_vh=trip.d_vh, vvvh=trip.vvvh,
        slope_n=terrain.normalize_angle(slope),
        par_n=terrain.normalize_angle(par),
    )


@dataclass
class Patch:
    """One training example: 5 feature channels, binary label, validity mask."""

    features: np.ndarray
    label: np.ndarray
    valid: np.ndarray
    origin: tuple[str, int, int]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        self.label = np.asarray(self.label, dtype=np.float32)
        self.valid = np.asarray(self.valid, dtype=np.float32)
        if self.features.ndim != 3 or self.features.shape[0] != 5:
            raise DimensionError(f"features must be (5,h,w), got {self.features.shape}")
        if self.label.shape != self.features.shape[1:] or self.valid.shape != self.label.shape:
            raise DimensionError("label/valid shape mismatch with features")
        if not np.isin(self.label, (0.0, 1.0)).all():
            raise ValueRangeError("label must be binary")
        if not np.isin(self.valid, (0.0, 1.0)).all():
            raise ValueRangeError("validity mask must be binary")
        if self.features.min() < 0 or self.features.max() > 1:
            raise ValueRangeError("patch features outside [0,1]")

    @property
    def pos_pixels(self) -> int:
        return int(((self.label == 1) & (self.valid == 1)).sum())

    @property
    def valid_pixels(self) -> int:
        return int((self.valid == 1).sum())


def save_patch(patch: Patch, grid: RasterGrid, path) -> None:
    data = np.concatenate([patch.features,
                           patch.label[np.newaxis], patch.valid[np.newaxis]])
    write_raster(Raster(grid, data), path)


def load_patch(path, origin: tuple[str, int, int] | None = None) -> Patch:
    r = read_raster(path)
    if r.bands != len(PATCH_BANDS):
        raise DimensionError(f"{path}: expected {len(PATCH_BANDS)} bands, got {r.bands}")
    return Patch(features=r.data[:5].copy(), label=r.data[5].copy(),
                 valid=r.data[6].copy(), origin=origin or ("", 0, 0))


def extract_patches(stack: FeatureStack, labels: Raster, scene_id: str,
                    size: int = PATCH_SIZE, stride: int | None = None,
                    min_pos_fraction: float = 0.0,
                    neg_keep_rate: float = NEG_KEEP_RATE,
                    seed: int = 0) -> list[Patch]:
    """Cut a scene into grid-aligned patches.

    Patches whose positive fraction falls below min_pos_fraction survive
    with probability neg_keep_rate (one seeded draw per candidate, in
    row-major candidate order, so the output is reproducible).
    """
    assert_aligned(list(stack.rasters()) + [labels])
    h, w = labels.shape
    if size > h or size > w:
        raise DimensionError(f"scene {h}x{w} smaller than patch size {size}")
    stride = size if stride is None else int(stride)
    if stride < 1:
        raise ValueRangeError(f"stride must be >= 1, got {stride}")

    feats = stack.array()
    fvalid = stack.valid()
    lab = labels.band(0)
    lvalid = labels.valid_mask(0)
    rng = np.random.default_rng(seed)

    out = []
    for r0 in range(0, h - size + 1, stride):
        for c0 in range(0, w - size + 1, stride):
            sl = (slice(r0, r0 + size), slice(c0, c0 + size))
            valid = (fvalid[sl] & lvalid[sl]).astype(np.float32)
            label = np.where(valid == 1, lab[sl], np.float32(0)).astype(np.float32)
            pos_fraction = float(((label == 1) & (valid == 1)).sum()) / float(size * size)
            draw = rng.random()
            if pos_fraction < min_pos_fraction and draw >= neg_keep_rate:
                continue
            out.append(Patch(features=feats[(slice(None),) + sl] * valid,
                             label=label, valid=valid,
                             origin=(scene_id, r0, c0)))
    return out


def _affine_patch(patch: Patch, matrix: np.ndarray, offset: np.ndarray) -> Patch:
    feats = np.stack([
        ndimage.affine_transform(ch, matrix, offset=offset, order=1, cval=0.0,
                                 mode="constant", prefilter=False)
        for ch in patch.features])
    label = ndimage.affine_transform(patch.label, matrix, offset=offset, order=0,
                                     cval=0.0, mode="constant")
    valid = ndimage.affine_transform(patch.valid, matrix, offset=offset, order=0,
                                     cval=0.0, mode="constant")
    feats = np.clip(feats, 0.0, 1.0) * valid
    return Patch(features=feats, label=label * valid, valid=valid, origin=patch.origin)


def augment(patch: Patch, transform: str, seed: int = 0) -> Patch:
    """Apply one named transform to features, label, and validity alike.

    Flips and right-angle rotations are exact. shift/zoom/shear draw their
    parameter from the seed; features interpolate bilinearly, label and
    validity use nearest neighbor, and exposed regions become invalid.
    """
    rng = np.random.default_rng(seed)
    f, lab, val = patch.features, patch.label, patch.valid
    if transform == "none":
        return Patch(f.copy(), lab.copy(), val.copy(), patch.origin)
    if transform == "hflip":
        return Patch(f[:, :, ::-1].copy(), lab[:, ::-1].copy(), val[:, ::-1].copy(),
                     patch.origin)
    if transform == "vflip":
        return Patch(f[:, ::-1].copy(), lab[::-1].copy(), val[::-1].copy(), patch.origin)
    if transform in ("rot90", "rot180", "rot270"):
        k = {"rot90": 1, "rot180": 2, "rot270": 3}[transform]
        return Patch(np.rot90(f, k, axes=(1, 2)).copy(), np.rot90(lab, k).copy(),
                     np.rot90(val, k).copy(), patch.origin)
    if transform == "shift":
        dr = int(rng.integers(-SHIFT_MAX_PX, SHIFT_MAX_PX + 1))
        dc = int(rng.integers(-SHIFT_MAX_PX, SHIFT_MAX_PX + 1))
        out_f = np.zeros_like(f)
        out_l = np.zeros_like(lab)
        out_v = np.zeros_like(val)
        h, w = lab.shape
        sr = slice(max(0, dr), min(h, h + dr))
        tc = slice(max(0, dc), min(w, w + dc))
        fr = slice(max(0, -dr), min(h, h - dr))
        fc = slice(max(0, -dc), min(w, w - dc))
        out_f[:, sr, tc] = f[:, fr, fc]
        out_l[sr, tc] = lab[fr, fc]
        out_v[sr, tc] = val[fr, fc]
        return Patch(out_f, out_l, out_v, patch.origin)
    h, w = lab.shape
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    if transform == "zoom":
        z = float(rng.uniform(*ZOOM_RANGE))
        matrix = np.array([[1.0 / z, 0.0], [0.0, 1.0 / z]])
    elif transform == "shear":
        s = float(np.tan(np.radians(rng.uniform(-SHEAR_MAX_DEG, SHEAR_MAX_DEG))))
        matrix = np.array([[1.0, 0.0], [s, 1.0]])
    else:
        raise ValueRangeError(f"unknown transform {transform!r}")
    offset = center - matrix @ center
    return _affine_patch(patch, matrix, offset)


@dataclass
class PatchRecord:
    path: str
    scene_id: str
    row: int
    col: int
    pos_pixels: int
    valid_pixels: int


@dataclass
class DatasetManifest:
    """Patch inventory with class totals and the scene-level split map."""

    patches: list[PatchRecord] = field(default_factory=list)
    splits: dict[str, str] = field(default_factory=dict)
    pos_total: int = 0
    neg_total: int = 0
    seed: int = 0
    bands: tuple[str, ...] = PATCH_BANDS

    def scene_ids(self) -> list[str]:
        seen = dict.fromkeys(rec.scene_id for rec in self.patches)
        return list(seen)

    def records_for(self, split: str) -> list[PatchRecord]:
        if not self.splits:
            raise DegenerateDatasetError("manifest has no split assignment")
        return [rec for rec in self.patches if self.splits.get(rec.scene_id) == split]

    def recompute_totals(self) -> None:
        self.pos_total = sum(rec.pos_pixels for rec in self.patches)
        self.neg_total = sum(rec.valid_pixels - rec.pos_pixels for rec in self.patches)

    def to_json(self) -> str:
        doc = {
            "format_version": 1,
            "bands": list(self.bands),
            "seed": self.seed,
            "pos_total": self.pos_total,
            "neg_total": self.neg_total,
            "splits": dict(sorted(self.splits.items())),
            "patches": [vars(rec) for rec in self.patches],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        doc = json.loads(Path(path).read_text())
        m = cls(
            patches=[PatchRecord(**rec) for rec in doc["patches"]],
            splits=dict(doc.get("splits", {})),
            pos_total=int(doc["pos_total"]),
            neg_total=int(doc["neg_total"]),
            seed=int(doc.get("seed", 0)),
            bands=tuple(doc["bands"]),
        )
        expect_pos = sum(rec.pos_pixels for rec in m.patches)
        expect_neg = sum(rec.valid_pixels - rec.pos_pixels for rec in m.patches)
        if expect_pos != m.pos_total or expect_neg != m.neg_total:
            raise DegenerateDatasetError(
                f"{path}: class totals disagree with patch records")
        return m


def class_stats(manifest: DatasetManifest,
                cap: float = POS_WEIGHT_CAP) -> tuple[int, int, float]:
    """(pos_pixels, neg_pixels, pos_weight) with pos_weight = neg/pos capped."""
    if not manifest.patches:
        raise DegenerateDatasetError("empty manifest")
    pos, neg = manifest.pos_total, manifest.neg_total
    if pos == 0:
        raise DegenerateDatasetError("no positive pixels in dataset")
    return pos, neg, min(neg / pos, cap)


def split_scenes(manifest: DatasetManifest, val_fraction: float,
                 seed: int) -> DatasetManifest:
    """Assign whole scenes to train/val; deterministic in the seed."""
    ids = sorted(manifest.scene_ids())
    if len(ids) < 2:
        raise DegenerateDatasetError(f"need >= 2 scenes to split, have {len(ids)}")
    if not 0.0 < val_fraction < 1.0:
        raise ValueRangeError(f"val_fraction must be in (0,1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n_val = min(max(1, round(len(ids) * val_fraction)), len(ids) - 1)
    splits = {sid: ("val" if k < n_val else "train") for k, sid in enumerate(order)}
    out = DatasetManifest(patches=list(manifest.patches), splits=splits,
                          pos_total=manifest.pos_total, neg_total=manifest.neg_total,
                          seed=seed, bands=manifest.bands)
    return out


def build_dataset(scene_dirs, out_dir, size: int = PATCH_SIZE,
                  stride: int | None = None, min_pos_fraction: float = 0.0,
                  neg_keep_rate: float = NEG_KEEP_RATE, seed: int = 0,
                  band: tuple[float, float] = terrain.RELEASE_BAND,
                  radius: float = terrain.PAR_RADIUS) -> DatasetManifest:
    """Feature-extract labeled scene directories into a patch dataset on disk."""
    from .raster import load_scene

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest(seed=seed)
    for scene_dir in sorted(str(s) for s in scene_dirs):
        scene, meta = load_scene(scene_dir)
        if scene.labels is None:
            raise DegenerateDatasetError(f"{scene_dir}: scene has no labels")
        sid = meta.get("scene_id", Path(scene_dir).name)
        stack = build_feature_stack(scene, meta.get("encoding", "linear"),
                                    band=band, radius=radius)
        patches = extract_patches(stack, scene.labels, sid, size=size, stride=stride,
                                  min_pos_fraction=min_pos_fraction,
                                  neg_keep_rate=neg_keep_rate, seed=seed)
        for p in patches:
            name = f"{sid}_r{p.origin[1]:05d}_c{p.origin[2]:05d}.avrs"
            grid = scene.grid.shifted(p.origin[1], p.origin[2], size, size)
            save_patch(p, grid, out / name)
            manifest.patches.append(PatchRecord(
                path=name, scene_id=sid, row=p.origin[1], col=p.origin[2],
                pos_pixels=p.pos_pixels, valid_pixels=p.valid_pixels))
    manifest.recompute_totals()
    manifest.save(out / "manifest.json")
    return manifest
