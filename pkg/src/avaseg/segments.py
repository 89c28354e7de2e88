"""Connected debris segments: extraction, attributes, filtering, event
matching, and GeoJSON export.

Pixel sets are run-length encoded per row. Component labels follow
row-major discovery order, so segment ids are stable across runs and
platforms for identical masks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DimensionError, ValueRangeError
from .raster import Raster, RasterGrid, assert_aligned

_STRUCT_8 = np.ones((3, 3), dtype=bool)
_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass
class DebrisSegment:
    """One connected component of a binary mask plus physical attributes."""

    id: int
    runs: list[tuple[int, int, int]]  # (row, col_start, col_end) half-open
    pixel_count: int
    area_m2: float = 0.0
    centroid_xy: tuple[float, float] | None = None
    mean_elev: float | None = None
    max_elev: float | None = None
    max_par: float | None = None
    mean_d_vv: float | None = None

    def pixel_indices(self) -> tuple[np.ndarray, np.ndarray]:
        rows = np.concatenate([np.full(c1 - c0, r, dtype=np.int64)
                               for r, c0, c1 in self.runs])
        cols = np.concatenate([np.arange(c0, c1, dtype=np.int64)
                               for r, c0, c1 in self.runs])
        return rows, cols

    def to_mask(self, shape: tuple[int, int]) -> np.ndarray:
        m = np.zeros(shape, dtype=bool)
        rows, cols = self.pixel_indices()
        m[rows, cols] = True
        return m


def _binary_band(mask: Raster) -> np.ndarray:
    b = mask.band(0)
    valid = mask.valid_mask(0)
    ok = ~valid | (b == 0) | (b == 1)
    if not ok.all():
        idx = tuple(int(i) for i in np.argwhere(~ok)[0])
        raise ValueRangeError(f"mask must be binary, found {b[idx]} at {idx}")
    return (b == 1) & valid


def _runs_from_rows(rows: np.ndarray, cols: np.ndarray) -> list[tuple[int, int, int]]:
    """Row-major sorted pixel indices -> half-open run list."""
    runs = []
    n = len(rows)
    i = 0
    while i < n:
        r, c0 = int(rows[i]), int(cols[i])
        j = i + 1
        while j < n and rows[j] == r and cols[j] == cols[j - 1] + 1:
            j += 1
        runs.append((r, c0, int(cols[j - 1]) + 1))
        i = j
    return runs


def connected_components(mask: Raster, connectivity: int = 8) -> list[DebrisSegment]:
    """Label a binary raster; ids count from 1 in row-major discovery order."""
    if connectivity not in (4, 8):
        raise ValueRangeError(f"connectivity must be 4 or 8, got {connectivity}")
    binary = _binary_band(mask)
    struct = _STRUCT_8 if connectivity == 8 else _STRUCT_4
    labels, n = ndimage.label(binary, structure=struct)
    if n == 0:
        return []
    flat = labels.ravel()
    nz = np.flatnonzero(flat)
    first = np.full(n + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, flat[nz], nz)
    order = np.argsort(first[1:], kind="stable") + 1
    rank = np.empty(n + 1, dtype=np.int64)
    rank[order] = np.arange(1, n + 1)

    segs = []
    spacing_area = mask.grid.pixel_dx * abs(mask.grid.pixel_dy)
    for new_id in range(1, n + 1):
        old = int(order[new_id - 1])
        ridx, cidx = np.nonzero(labels == old)
        runs = _runs_from_rows(ridx, cidx)
        count = int(ridx.size)
        segs.append(DebrisSegment(id=new_id, runs=runs, pixel_count=count,
                                  area_m2=count * spacing_area))
    return segs


def segment_stats(segment: DebrisSegment, grid: RasterGrid,
                  dem: Raster | None = None, par: Raster | None = None,
                  d_vv: Raster | None = None) -> DebrisSegment:
    """Fill the physical attributes of a segment in place and return it."""
    rows, cols = segment.pixel_indices()
    segment.area_m2 = segment.pixel_count * grid.pixel_dx * abs(grid.pixel_dy)
    xs = grid.origin_x + (cols + 0.5) * grid.pixel_dx
    ys = grid.origin_y + (rows + 0.5) * grid.pixel_dy
    segment.centroid_xy = (float(xs.mean()), float(ys.mean()))

    def sample(r: Raster) -> np.ndarray:
        v = r.band(0)[rows, cols]
        return v[v != np.float32(r.nodata)]

    if dem is not None:
        v = sample(dem)
        segment.mean_elev = float(v.mean()) if v.size else None
        segment.max_elev = float(v.max()) if v.size else None
    if par is not None:
        v = sample(par)
        segment.max_par = float(v.max()) if v.size else None
    if d_vv is not None:
        v = sample(d_vv)
        segment.mean_d_vv = float(v.mean()) if v.size else None
    return segment


@dataclass
class FilterCriteria:
    """Rejection rules applied in order: area, elevation, excluded, runout."""

    min_area_m2: float | None = None
    elev_range: tuple[float, float] | None = None
    excluded_mask: Raster | None = None
    runout_mask: Raster | None = None
    min_runout_overlap: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.min_runout_overlap <= 1.0:
            raise ValueRangeError(
                f"min_runout_overlap must be in [0,1], got {self.min_runout_overlap}")


def _overlap_fraction(segment: DebrisSegment, mask: Raster) -> float:
    rows, cols = segment.pixel_indices()
    m = mask.band(0)[rows, cols] == 1
    return float(m.sum()) / float(segment.pixel_count)


def filter_segments(segments: list[DebrisSegment], criteria: FilterCriteria
                    ) -> tuple[list[DebrisSegment], list[tuple[DebrisSegment, str]]]:
    """Split segments into (kept, rejected-with-first-failing-reason)."""
    kept = []
    rejected = []
    for seg in segments:
        reason = None
        if criteria.min_area_m2 is not None and seg.area_m2 < criteria.min_area_m2:
            reason = "area"
        elif criteria.elev_range is not None:
            if seg.mean_elev is None:
                reason = "elevation"
            else:
                lo, hi = criteria.elev_range
                if not lo <= seg.mean_elev <= hi:
                    reason = "elevation"
        if reason is None and criteria.excluded_mask is not None:
            if _overlap_fraction(seg, criteria.excluded_mask) > 0.0:
                reason = "excluded_zone"
        if reason is None and criteria.runout_mask is not None:
            if _overlap_fraction(seg, criteria.runout_mask) < criteria.min_runout_overlap:
                reason = "runout_overlap"
        if reason is None:
            kept.append(seg)
        else:
            rejected.append((seg, reason))
    return kept, rejected


@dataclass(frozen=True)
class EventCounts:
    detected: int
    missed: int
    false_pos: int


def match_events(pred: list[DebrisSegment], gt: list[DebrisSegment],
                 shape: tuple[int, int], min_overlap_px: int = 1,
                 mode: str = "pixels", min_iou: float = 0.1) -> EventCounts:
    """Event-level confusion counts.

    mode "pixels": a ground-truth segment counts as detected when at least
    min_overlap_px predicted pixels fall inside it. mode "iou": detection
    requires some single prediction to reach min_iou against the segment.
    In both modes a prediction intersecting no ground truth at all is a
    false positive.
    """
    if mode not in ("pixels", "iou"):
        raise ValueRangeError(f"unknown match mode {mode!r}")
    if min_overlap_px < 1:
        raise ValueRangeError(f"min_overlap_px must be >= 1, got {min_overlap_px}")
    pred_lab = np.zeros(shape, dtype=np.int64)
    for s in pred:
        rows, cols = s.pixel_indices()
        pred_lab[rows, cols] = s.id
    detected = 0
    for g in gt:
        rows, cols = g.pixel_indices()
        hits = pred_lab[rows, cols]
        if mode == "pixels":
            if int((hits > 0).sum()) >= min_overlap_px:
                detected += 1
        else:
            ok = False
            for pid in np.unique(hits[hits > 0]):
                inter = int((hits == pid).sum())
                p = next(s for s in pred if s.id == pid)
                union = p.pixel_count + g.pixel_count - inter
                if inter / union >= min_iou:
                    ok = True
                    break
            if ok:
                detected += 1
    gt_mask = np.zeros(shape, dtype=bool)
    for g in gt:
        rows, cols = g.pixel_indices()
        gt_mask[rows, cols] = True
    false_pos = 0
    for s in pred:
        rows, cols = s.pixel_indices()
        if not gt_mask[rows, cols].any():
            false_pos += 1
    return EventCounts(detected=detected, missed=len(gt) - detected, false_pos=false_pos)


# ---- GeoJSON export ----


def _boundary_edges(pixels: set) -> dict:
    """Directed boundary edges of unit pixel squares, keyed by start vertex.

    Edges run clockwise around each pixel in (row, col) space, which makes
    the traced exterior ring counterclockwise in world coordinates (y is
    north-up, row axis points south).
    """
    edges: dict = {}

    def add(a, b):
        edges.setdefault(a, []).append(b)

    for (r, c) in pixels:
        if (r - 1, c) not in pixels:
            add((r, c), (r, c + 1))
        if (r, c + 1) not in pixels:
            add((r, c + 1), (r + 1, c + 1))
        if (r + 1, c) not in pixels:
            add((r + 1, c + 1), (r + 1, c))
        if (r, c - 1) not in pixels:
            add((r + 1, c), (r, c))
    return edges


def _trace_rings(edges: dict) -> list[list[tuple[int, int]]]:
    """Chain directed edges into closed rings; consumes the edge map."""
    for v in edges:
        edges[v].sort()
    rings = []
    while edges:
        start = min(edges)
        ring = [start]
        prev_dir = None
        cur = start
        while True:
            outs = edges.get(cur)
            if prev_dir is None or len(outs) == 1:
                nxt = outs.pop(0)
            else:
                # two diagonal squares meet here; take the turn that crosses
                # into the diagonal neighbor so the outer ring covers both
                def cross(cand, d1=prev_dir):
                    d2 = (cand[0] - cur[0], cand[1] - cur[1])
                    return d1[0] * d2[1] - d1[1] * d2[0]
                nxt = max(outs, key=cross)
                outs.remove(nxt)
            if not outs:
                del edges[cur]
            prev_dir = (nxt[0] - cur[0], nxt[1] - cur[1])
            cur = nxt
            ring.append(cur)
            if cur == start:
                break
        rings.append(ring)
    return rings


def _ring_area2(ring: list[tuple[float, float]]) -> float:
    """Twice the signed shoelace area of a closed ring."""
    s = 0.0
    for (x0, y0), (x1, y1) in zip(ring[:-1], ring[1:]):
        s += x0 * y1 - x1 * y0
    return s


def exterior_ring(segment: DebrisSegment, grid: RasterGrid) -> list[tuple[float, float]]:
    """World-coordinate exterior ring (closed, counterclockwise)."""
    rows, cols = segment.pixel_indices()
    pixels = set(zip(rows.tolist(), cols.tolist()))
    rings = _trace_rings(_boundary_edges(pixels))
    world = [[grid.pixel_corner(r, c) for r, c in ring] for ring in rings]
    best = max(world, key=lambda ring: abs(_ring_area2(ring)))
    if _ring_area2(best) < 0:
        best = best[::-1]
    return best


def _segment_properties(seg: DebrisSegment) -> dict:
    return {
        "id": seg.id,
        "pixel_count": seg.pixel_count,
        "area_m2": seg.area_m2,
        "centroid_x": None if seg.centroid_xy is None else seg.centroid_xy[0],
        "centroid_y": None if seg.centroid_xy is None else seg.centroid_xy[1],
        "mean_elev": seg.mean_elev,
        "max_elev": seg.max_elev,
        "max_par": seg.max_par,
        "mean_d_vv": seg.mean_d_vv,
    }


def export_geojson(segments: list[DebrisSegment], grid: RasterGrid, path,
                   rejected: list[tuple[DebrisSegment, str]] | None = None) -> None:
    """Write a FeatureCollection of exterior-ring polygons."""
    features = []
    for seg in segments:
        ring = exterior_ring(seg, grid)
        features.append({
            "type": "Feature",
            "geometry": {"type": "Polygon",
                         "coordinates": [[[x, y] for x, y in ring]]},
            "properties": _segment_properties(seg),
        })
    for seg, reason in rejected or []:
        ring = exterior_ring(seg, grid)
        props = _segment_properties(seg)
        props["reject_reason"] = reason
        features.append({
            "type": "Feature",
            "geometry": {"type": "Polygon",
                         "coordinates": [[[x, y] for x, y in ring]]},
            "properties": props,
        })
    doc = {"type": "FeatureCollection", "features": features}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---- lossless sidecar format for pipeline hand-off between CLI stages ----


def save_segments_json(segments: list[DebrisSegment], grid: RasterGrid,
                       shape: tuple[int, int], path,
                       rejected: list[tuple[DebrisSegment, str]] | None = None) -> None:
    def enc(seg: DebrisSegment, reason: str | None = None) -> dict:
        d = _segment_properties(seg)
        d["runs"] = [list(r) for r in seg.runs]
        if reason is not None:
            d["reject_reason"] = reason
        return d

    doc = {
        "format_version": 1,
        "height": shape[0],
        "width": shape[1],
        "geotransform": list(grid.geotransform),
        "nodata": grid.nodata,
        "segments": [enc(s) for s in segments],
        "rejected": [enc(s, reason) for s, reason in rejected or []],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_segments_json(path) -> tuple[list[DebrisSegment], RasterGrid,
                                       tuple[int, int], list[tuple[DebrisSegment, str]]]:
    doc = json.loads(Path(path).read_text())
    grid = RasterGrid(int(doc["width"]), int(doc["height"]),
                      tuple(doc["geotransform"]), float(doc["nodata"]))

    def dec(d: dict) -> DebrisSegment:
        runs = [tuple(int(v) for v in r) for r in d["runs"]]
        return DebrisSegment(
            id=int(d["id"]), runs=runs, pixel_count=int(d["pixel_count"]),
            area_m2=float(d["area_m2"]),
            centroid_xy=None if d["centroid_x"] is None else (d["centroid_x"], d["centroid_y"]),
            mean_elev=d["mean_elev"], max_elev=d["max_elev"],
            max_par=d["max_par"], mean_d_vv=d["mean_d_vv"])

    segs = [dec(d) for d in doc["segments"]]
    rejected = [(dec(d), str(d["reject_reason"])) for d in doc.get("rejected", [])]
    return segs, grid, (int(doc["height"]), int(doc["width"])), rejected
