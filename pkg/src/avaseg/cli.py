"""Command-line pipeline driver.

Exit codes: 0 success, 1 usage error, 2 data error. Every subcommand takes
--seed where randomness is involved and --json for machine-readable output.
Thread count comes from --threads or the AVA_THREADS environment variable
(the variable also steers the BLAS runtime when set before startup).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _emit(args, payload: dict) -> None:
    if getattr(args, "json", False):
        sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")
    else:
        for k, v in payload.items():
            sys.stdout.write(f"{k}: {v}\n")


def _apply_threads(args) -> None:
    n = getattr(args, "threads", None) or os.environ.get("AVA_THREADS")
    if not n:
        return
    os.environ["AVA_THREADS"] = str(n)
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(limits=int(n))
    except Exception:
        for key in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(key, str(n))


# ---- subcommand handlers ----


def cmd_synth(args) -> int:
    from . import synth
    from .raster import save_scene

    dem = synth.synth_dem(args.seed, size=args.size, relief=args.relief,
                          spacing=args.spacing)
    scene = synth.synth_scene(args.seed, dem, args.n)
    scene_id = Path(args.out).name
    save_scene(scene, args.out, meta={"encoding": "linear", "seed": args.seed,
                                      "n_avalanches": args.n, "scene_id": scene_id})
    _emit(args, {"out": str(args.out), "scene_id": scene_id,
                 "n_avalanches": args.n,
                 "label_pixels": int(scene.labels.band(0).sum())})
    return 0


def cmd_features(args) -> int:
    from . import radiometry
    from .raster import load_scene, write_raster, SceneStack

    scene, meta = load_scene(args.scene)
    encoding = meta.get("encoding", "linear")

    def unit(r):
        if encoding == "linear":
            r = radiometry.to_db_clip(r)
        if encoding in ("linear", "db"):
            r = radiometry.rescale_unit(r)
        return r

    scaled = SceneStack(vv_ref=unit(scene.vv_ref), vv_act=unit(scene.vv_act),
                        vh_ref=unit(scene.vh_ref), vh_act=unit(scene.vh_act),
                        dem=scene.dem, labels=scene.labels)
    trip = radiometry.change_features(scaled)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_raster(trip.d_vv, out / "d_vv.avrs")
    write_raster(trip.d_vh, out / "d_vh.avrs")
    write_raster(trip.vvvh, out / "vvvh.avrs")
    payload = {"out": str(out), "files": "d_vv.avrs,d_vh.avrs,vvvh.avrs"}
    if args.rgb:
        radiometry.rgb_composite(scaled.vv_ref, scaled.vv_act, args.rgb)
        payload["rgb"] = str(args.rgb)
    _emit(args, payload)
    return 0


def cmd_terrain(args) -> int:
    from . import terrain
    from .raster import read_raster, write_raster

    dem = read_raster(args.dem)
    slope = terrain.slope_deg(dem)
    release = terrain.release_mask(slope, tuple(args.band))
    par = terrain.par_field(dem, release, args.radius)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_raster(slope, out / "slope.avrs")
    write_raster(release, out / "release.avrs")
    write_raster(par, out / "par.avrs")
    _emit(args, {"out": str(out), "files": "slope.avrs,release.avrs,par.avrs",
                 "release_pixels": int((release.band(0) == 1).sum())})
    return 0


def cmd_dataset_build(args) -> int:
    from .dataset import build_dataset

    manifest = build_dataset(args.scenes, args.out, size=args.size,
                             stride=args.stride, min_pos_fraction=args.min_pos,
                             neg_keep_rate=args.neg_keep, seed=args.seed,
                             band=tuple(args.band), radius=args.radius)
    _emit(args, {"out": str(args.out), "patches": len(manifest.patches),
                 "pos_total": manifest.pos_total, "neg_total": manifest.neg_total})
    return 0


def cmd_dataset_split(args) -> int:
    from .dataset import DatasetManifest, split_scenes

    manifest = DatasetManifest.load(args.manifest)
    out = split_scenes(manifest, args.val_fraction, args.seed)
    out.save(args.out or args.manifest)
    n_val = sum(1 for s in out.splits.values() if s == "val")
    _emit(args, {"manifest": str(args.out or args.manifest),
                 "train_scenes": len(out.splits) - n_val, "val_scenes": n_val})
    return 0


def cmd_dataset_stats(args) -> int:
    from .dataset import DatasetManifest, class_stats

    manifest = DatasetManifest.load(args.manifest)
    pos, neg, pw = class_stats(manifest, cap=args.cap)
    _emit(args, {"patches": len(manifest.patches), "pos_pixels": pos,
                 "neg_pixels": neg, "pos_weight": pw})
    return 0


def cmd_train(args) -> int:
    from .dataset import DatasetManifest
    from .model import FcnConfig, SegModel, TrainConfig, history_to_csv, train

    model_kwargs = {}
    train_kwargs = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        model_kwargs.update(doc.get("model", {}))
        train_kwargs.update(doc.get("train", {}))
    if args.no_attention:
        model_kwargs["attention"] = False
    for key, val in (("epochs", args.epochs), ("batch_size", args.batch_size),
                     ("lr", args.lr), ("loss", args.loss), ("seed", args.seed),
                     ("early_stop_train_f1", args.early_stop_f1)):
        if val is not None:
            train_kwargs[key] = val
    if args.no_augment:
        train_kwargs["augment"] = False
    if args.pos_weight is not None:
        train_kwargs["pos_weight"] = (
            "auto" if args.pos_weight == "auto" else float(args.pos_weight))

    cfg = FcnConfig(**model_kwargs)
    tcfg = TrainConfig(**train_kwargs)
    manifest = DatasetManifest.load(Path(args.dataset) / "manifest.json")
    model = SegModel(cfg, seed=tcfg.seed)
    best, history = train(model, manifest, tcfg, args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model.load_arrays(best)
    model.save(out / "weights.avw")
    (out / "history.csv").write_text(history_to_csv(history))
    (out / "train_config.json").write_text(json.dumps(
        {"model": model_kwargs, "train": vars(tcfg)}, indent=2, sort_keys=True) + "\n")
    last = history[-1]
    _emit(args, {"out": str(out), "epochs_run": len(history),
                 "val_f1": last["val_f1"], "parameters": model.parameter_count()})
    return 0


def cmd_predict(args) -> int:
    from .dataset import build_feature_stack
    from .inference import FULL_TTA, predict_scene, threshold
    from .model import SegModel
    from .raster import load_scene, write_raster

    model = SegModel.load(args.weights)
    scene, meta = load_scene(args.scene)
    stack = build_feature_stack(scene, meta.get("encoding", "linear"),
                                band=tuple(args.band), radius=args.radius)
    tta = FULL_TTA if args.tta == "full" else ("id",)
    prob = predict_scene(model, stack, window=args.window, stride=args.stride,
                         tta=tta)
    mask = threshold(prob, args.tau)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_raster(prob, out / "prob.avrs")
    write_raster(mask, out / "mask.avrs")
    _emit(args, {"out": str(out), "files": "prob.avrs,mask.avrs",
                 "predicted_pixels": int((mask.band(0) == 1).sum())})
    return 0


def cmd_segments_extract(args) -> int:
    from .raster import read_raster
    from .segments import connected_components, save_segments_json, segment_stats

    mask = read_raster(args.mask)
    segs = connected_components(mask, connectivity=args.connectivity)
    dem = read_raster(args.dem) if args.dem else None
    par = read_raster(args.par) if args.par else None
    dvv = read_raster(args.dvv) if args.dvv else None
    for s in segs:
        segment_stats(s, mask.grid, dem=dem, par=par, d_vv=dvv)
    save_segments_json(segs, mask.grid, mask.shape, args.out)
    _emit(args, {"out": str(args.out), "segments": len(segs)})
    return 0


def cmd_segments_filter(args) -> int:
    from .raster import read_raster
    from .segments import FilterCriteria, filter_segments, load_segments_json, \
        save_segments_json

    segs, grid, shape, _ = load_segments_json(args.segments)
    criteria = FilterCriteria(
        min_area_m2=args.min_area,
        elev_range=None if args.elev_min is None and args.elev_max is None
        else (args.elev_min if args.elev_min is not None else float("-inf"),
              args.elev_max if args.elev_max is not None else float("inf")),
        excluded_mask=read_raster(args.excluded) if args.excluded else None,
        runout_mask=read_raster(args.runout) if args.runout else None,
        min_runout_overlap=args.min_runout_overlap,
    )
    kept, rejected = filter_segments(segs, criteria)
    save_segments_json(kept, grid, shape, args.out, rejected=rejected)
    _emit(args, {"out": str(args.out), "kept": len(kept), "rejected": len(rejected)})
    return 0


def cmd_segments_export(args) -> int:
    from .segments import export_geojson, load_segments_json

    segs, grid, _, rejected = load_segments_json(args.segments)
    export_geojson(segs, grid, args.out,
                   rejected=rejected if args.include_rejected else None)
    _emit(args, {"out": str(args.out), "features": len(segs) +
                 (len(rejected) if args.include_rejected else 0)})
    return 0


def cmd_evaluate(args) -> int:
    from .metrics import evaluate, save_report
    from .raster import read_raster

    items = []
    for k, pair in enumerate(args.pairs):
        parts = pair.split(":")
        if len(parts) not in (2, 3):
            raise SystemExit(
                f"evaluate: pair must be PRED:GT[:ID], got {pair!r}") from None
        items.append({"id": parts[2] if len(parts) == 3 else f"scene{k}",
                      "prob": read_raster(parts[0]), "gt": read_raster(parts[1])})
    sweep = tuple(float(t) for t in args.sweep.split(",")) if args.sweep else ()
    report = evaluate(items, tau=args.tau, tau_sweep=sweep,
                      min_overlap_px=args.min_overlap_px)
    if args.out:
        save_report(report, args.out)
    agg = report["aggregate"]
    _emit(args, {"out": str(args.out) if args.out else "-",
                 "f1": agg["f1"], "iou": agg["iou"],
                 "detected": agg["events"]["detected"],
                 "missed": agg["events"]["missed"],
                 "false_pos": agg["events"]["false_pos"]})
    return 0


# ---- parser ----


def _add_common(p, seed=False):
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--threads", type=int, help="worker thread cap (or AVA_THREADS)")
    if seed:
        p.add_argument("--seed", type=int, default=0)


def build_parser() -> _Parser:
    parser = _Parser(prog="ava", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic labeled scene")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=320)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--relief", type=float, default=500.0)
    p.add_argument("--spacing", type=float, default=20.0)
    _add_common(p, seed=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="SAR change features from a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rgb", help="also write an RGB change composite PNG")
    _add_common(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("terrain", help="slope, release mask, and reach angle")
    p.add_argument("--dem", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--band", type=float, nargs=2, default=[35.0, 45.0])
    p.add_argument("--radius", type=float, default=2000.0)
    _add_common(p)
    p.set_defaults(func=cmd_terrain)

    p = sub.add_parser("dataset", help="patch dataset commands")
    dsub = p.add_subparsers(dest="dataset_command", parser_class=_Parser)
    b = dsub.add_parser("build")
    b.add_argument("--scenes", nargs="+", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--size", type=int, default=160)
    b.add_argument("--stride", type=int)
    b.add_argument("--min-pos", type=float, default=0.0)
    b.add_argument("--neg-keep", type=float, default=0.1)
    b.add_argument("--band", type=float, nargs=2, default=[35.0, 45.0])
    b.add_argument("--radius", type=float, default=2000.0)
    _add_common(b, seed=True)
    b.set_defaults(func=cmd_dataset_build)
    s = dsub.add_parser("split")
    s.add_argument("--manifest", required=True)
    s.add_argument("--val-fraction", type=float, default=0.2)
    s.add_argument("--out")
    _add_common(s, seed=True)
    s.set_defaults(func=cmd_dataset_split)
    st = dsub.add_parser("stats")
    st.add_argument("--manifest", required=True)
    st.add_argument("--cap", type=float, default=500.0)
    _add_common(st)
    st.set_defaults(func=cmd_dataset_stats)

    p = sub.add_parser("train", help="train the segmentation model")
    p.add_argument("--dataset", required=True, help="directory with manifest.json")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file with {model:{...}, train:{...}}")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--loss", choices=["weighted_bce", "soft_jaccard"])
    p.add_argument("--pos-weight")
    p.add_argument("--early-stop-f1", type=float)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--no-attention", action="store_true")
    _add_common(p, seed=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="tiled whole-scene prediction")
    p.add_argument("--weights", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=160)
    p.add_argument("--stride", type=int)
    p.add_argument("--tta", choices=["full", "none"], default="full")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--band", type=float, nargs=2, default=[35.0, 45.0])
    p.add_argument("--radius", type=float, default=2000.0)
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("segments", help="segment extraction and filtering")
    ssub = p.add_subparsers(dest="segments_command", parser_class=_Parser)
    e = ssub.add_parser("extract")
    e.add_argument("--mask", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--connectivity", type=int, choices=[4, 8], default=8)
    e.add_argument("--dem")
    e.add_argument("--par")
    e.add_argument("--dvv")
    _add_common(e)
    e.set_defaults(func=cmd_segments_extract)
    f = ssub.add_parser("filter")
    f.add_argument("--segments", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--min-area", type=float)
    f.add_argument("--elev-min", type=float)
    f.add_argument("--elev-max", type=float)
    f.add_argument("--excluded")
    f.add_argument("--runout")
    f.add_argument("--min-runout-overlap", type=float, default=0.0)
    _add_common(f)
    f.set_defaults(func=cmd_segments_filter)
    x = ssub.add_parser("export")
    x.add_argument("--segments", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--include-rejected", action="store_true")
    _add_common(x)
    x.set_defaults(func=cmd_segments_export)

    p = sub.add_parser("evaluate", help="pixel and event metrics report")
    p.add_argument("--pairs", nargs="+", required=True,
                   help="PRED:GT[:ID] raster path pairs")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--sweep", help="comma-separated thresholds for the curve")
    p.add_argument("--min-overlap-px", type=int, default=1)
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 1
    _apply_threads(args)
    from .errors import AvaError

    try:
        return args.func(args)
    except AvaError as exc:
        sys.stderr.write(f"ava: {type(exc).__name__}: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"ava: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
