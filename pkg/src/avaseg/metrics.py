"""Pixel- and event-level evaluation with a versioned JSON report.

All pixel metrics are micro-averaged over valid pixels. A metric whose
denominator is zero is reported as 0.0 and its name is listed under
"degenerate" so the zero cannot be mistaken for a real score.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValueRangeError
from .raster import Raster, assert_aligned
from .segments import EventCounts, connected_components, match_events
from .inference import threshold

REPORT_VERSION = 1


def _binary_and_valid(r: Raster, name: str) -> tuple[np.ndarray, np.ndarray]:
    b = r.band(0)
    valid = r.valid_mask(0)
    ok = ~valid | (b == 0) | (b == 1)
    if not ok.all():
        idx = tuple(int(i) for i in np.argwhere(~ok)[0])
        raise ValueRangeError(f"{name} must be binary, found {b[idx]} at {idx}")
    return b == 1, valid


def pixel_metrics(pred: Raster, gt: Raster) -> dict:
    """Precision, recall, F1, IoU from TP/FP/FN over jointly valid pixels."""
    assert_aligned([pred, gt])
    p, pv = _binary_and_valid(pred, "pred")
    g, gv = _binary_and_valid(gt, "gt")
    valid = pv & gv
    tp = int((p & g & valid).sum())
    fp = int((p & ~g & valid).sum())
    fn = int((~p & g & valid).sum())
    degenerate = []

    def ratio(num: int, den: int, name: str) -> float:
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    f1 = ratio(2 * tp, 2 * tp + fp + fn, "f1")
    iou = ratio(tp, tp + fp + fn, "iou")
    return {"tp": tp, "fp": fp, "fn": fn, "precision": precision,
            "recall": recall, "f1": f1, "iou": iou, "degenerate": degenerate}


def _metrics_from_counts(tp: int, fp: int, fn: int) -> dict:
    degenerate = []

    def ratio(num, den, name):
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    return {"tp": tp, "fp": fp, "fn": fn,
            "precision": ratio(tp, tp + fp, "precision"),
            "recall": ratio(tp, tp + fn, "recall"),
            "f1": ratio(2 * tp, 2 * tp + fp + fn, "f1"),
            "iou": ratio(tp, tp + fp + fn, "iou"),
            "degenerate": degenerate}


def evaluate(items: list[dict], tau: float = 0.5,
             tau_sweep: tuple[float, ...] = (), connectivity: int = 8,
             min_overlap_px: int = 1) -> dict:
    """Build an evaluation report over scenes.

    Each item is {"id": str, "prob": Raster of probabilities (or a binary
    mask), "gt": binary Raster}. Scene masks come from thresholding prob at
    tau; the sweep also reports aggregate pixel metrics per candidate tau.
    The result is JSON-serializable with stable key order.
    """
    scenes = []
    agg_tp = agg_fp = agg_fn = 0
    agg_events = [0, 0, 0]
    for item in items:
        prob, gt = item["prob"], item["gt"]
        pred = threshold(prob, tau)
        m = pixel_metrics(pred, gt)
        pred_segs = connected_components(pred, connectivity)
        gt_segs = connected_components(gt, connectivity)
        ev = match_events(pred_segs, gt_segs, shape=pred.shape,
                          min_overlap_px=min_overlap_px)
        scenes.append({"id": str(item["id"]), **m,
                       "events": {"detected": ev.detected, "missed": ev.missed,
                                  "false_pos": ev.false_pos}})
        agg_tp += m["tp"]
        agg_fp += m["fp"]
        agg_fn += m["fn"]
        agg_events[0] += ev.detected
        agg_events[1] += ev.missed
        agg_events[2] += ev.false_pos

    aggregate = _metrics_from_counts(agg_tp, agg_fp, agg_fn)
    aggregate["events"] = {"detected": agg_events[0], "missed": agg_events[1],
                           "false_pos": agg_events[2]}

    curve = []
    for t in tau_sweep:
        ctp = cfp = cfn = 0
        for item in items:
            m = pixel_metrics(threshold(item["prob"], t), item["gt"])
            ctp += m["tp"]
            cfp += m["fp"]
            cfn += m["fn"]
        point = _metrics_from_counts(ctp, cfp, cfn)
        point["tau"] = float(t)
        curve.append(point)

    return {"format_version": REPORT_VERSION, "tau": float(tau),
            "scenes": scenes, "aggregate": aggregate, "threshold_curve": curve}


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def save_report(report: dict, path) -> None:
    Path(path).write_text(report_to_json(report))
