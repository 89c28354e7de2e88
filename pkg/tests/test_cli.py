"""End-to-end command line tests: every stage runs in-process via main()."""

import contextlib
import io
import json

import numpy as np
import pytest

from avaseg.cli import main
from avaseg.raster import read_raster


def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        try:
            code = main(list(argv))
        except SystemExit as exc:
            code = int(exc.code or 0)
    return code, out.getvalue(), err.getvalue()


def test_no_arguments_is_usage_error():
    code, _, err = run_cli()
    assert code == 1


def test_unknown_subcommand_is_usage_error():
    code, _, err = run_cli("bogus")
    assert code == 1
    assert "error" in err


def test_missing_required_flag_is_usage_error():
    code, _, _ = run_cli("synth")
    assert code == 1


def test_missing_input_file_is_data_error(tmp_path):
    code, _, err = run_cli("terrain", "--dem", str(tmp_path / "nope.avrs"),
                           "--out", str(tmp_path / "t"))
    assert code == 2
    assert err.startswith("ava:")


def test_corrupt_raster_is_data_error(tmp_path):
    bad = tmp_path / "bad.avrs"
    bad.write_bytes(b"not a raster at all")
    code, _, err = run_cli("terrain", "--dem", str(bad), "--out", str(tmp_path / "t"))
    assert code == 2


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run the full chain once; individual tests inspect the artifacts."""
    root = tmp_path_factory.mktemp("cli")
    scenes = []
    for seed in (21, 22):
        sd = root / f"scene{seed}"
        code, out, err = run_cli("synth", "--out", str(sd), "--size", "96",
                                 "--n", "1", "--seed", str(seed), "--json")
        assert code == 0, err
        scenes.append(sd)

    ds = root / "ds"
    code, _, err = run_cli("dataset", "build", "--scenes",
                           *[str(s) for s in scenes], "--out", str(ds),
                           "--size", "64", "--neg-keep", "1.0", "--seed", "0")
    assert code == 0, err
    code, _, err = run_cli("dataset", "split", "--manifest",
                           str(ds / "manifest.json"), "--val-fraction", "0.5",
                           "--seed", "0")
    assert code == 0, err

    cfg = root / "cfg.json"
    cfg.write_text(json.dumps({
        "model": {"n_blocks": 2, "base_filters": 4},
        "train": {"epochs": 1, "batch_size": 2, "lr": 1e-3,
                  "augment": False, "seed": 0},
    }))
    run_dir = root / "run"
    code, _, err = run_cli("train", "--dataset", str(ds), "--out", str(run_dir),
                           "--config", str(cfg))
    assert code == 0, err

    pred = root / "pred"
    code, _, err = run_cli("predict", "--weights", str(run_dir / "weights.avw"),
                           "--scene", str(scenes[0]), "--out", str(pred),
                           "--window", "64", "--stride", "32", "--tta", "none")
    assert code == 0, err
    return {"root": root, "scenes": scenes, "ds": ds, "run": run_dir, "pred": pred}


def test_synth_writes_scene_directory(pipeline):
    sd = pipeline["scenes"][0]
    for name in ("vv_ref", "vv_act", "vh_ref", "vh_act", "dem", "labels"):
        assert (sd / f"{name}.avrs").exists()
    doc = json.loads((sd / "scene.json").read_text())
    assert doc["files"]["dem"] == "dem.avrs"


def test_synth_repeat_is_byte_identical(pipeline, tmp_path):
    again = tmp_path / "again"
    code, _, _ = run_cli("synth", "--out", str(again), "--size", "96",
                         "--n", "1", "--seed", "21")
    assert code == 0
    first = pipeline["scenes"][0]
    for name in ("vv_ref", "vv_act", "vh_ref", "vh_act", "dem", "labels"):
        assert (again / f"{name}.avrs").read_bytes() == \
            (first / f"{name}.avrs").read_bytes()


def test_features_command(pipeline, tmp_path):
    out = tmp_path / "feat"
    png = tmp_path / "change.png"
    code, _, err = run_cli("features", "--scene", str(pipeline["scenes"][0]),
                           "--out", str(out), "--rgb", str(png))
    assert code == 0, err
    for name in ("d_vv", "d_vh", "vvvh"):
        r = read_raster(out / f"{name}.avrs")
        band = r.band(0)
        ok = band != np.float32(r.grid.nodata)
        assert band[ok].min() >= 0.0 and band[ok].max() <= 1.0
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_terrain_command(pipeline, tmp_path):
    out = tmp_path / "terr"
    code, _, err = run_cli("terrain", "--dem",
                           str(pipeline["scenes"][0] / "dem.avrs"),
                           "--out", str(out), "--radius", "500")
    assert code == 0, err
    slope = read_raster(out / "slope.avrs").band(0)
    assert slope.max() < 90.0
    release = read_raster(out / "release.avrs").band(0)
    assert set(np.unique(release)) <= {0.0, 1.0}
    par = read_raster(out / "par.avrs").band(0)
    assert par.min() >= 0.0 and par.max() < 90.0


def test_dataset_artifacts(pipeline):
    man = json.loads((pipeline["ds"] / "manifest.json").read_text())
    assert man["patches"] and man["splits"]
    assert set(man["splits"].values()) == {"train", "val"}
    code, out, err = run_cli("dataset", "stats", "--manifest",
                             str(pipeline["ds"] / "manifest.json"), "--json")
    assert code == 0, err
    stats = json.loads(out)
    assert stats["pos_weight"] > 0


def test_train_artifacts(pipeline):
    run_dir = pipeline["run"]
    assert (run_dir / "weights.avw").exists()
    hist = (run_dir / "history.csv").read_text().splitlines()
    assert hist[0] == "epoch,train_loss,val_loss,val_f1"
    assert len(hist) == 2  # one epoch
    cfg = json.loads((run_dir / "train_config.json").read_text())
    assert cfg["train"]["epochs"] == 1
    assert cfg["model"]["n_blocks"] == 2


def test_predict_artifacts(pipeline):
    prob = read_raster(pipeline["pred"] / "prob.avrs").band(0)
    assert prob.min() >= 0.0 and prob.max() <= 1.0
    mask = read_raster(pipeline["pred"] / "mask.avrs").band(0)
    assert set(np.unique(mask)) <= {0.0, 1.0}
    assert prob.shape == (96, 96)


def test_predict_rejects_mismatched_window(pipeline, tmp_path):
    code, _, err = run_cli("predict", "--weights",
                           str(pipeline["run"] / "weights.avw"),
                           "--scene", str(pipeline["scenes"][0]),
                           "--out", str(tmp_path / "p"),
                           "--window", "63", "--stride", "32", "--tta", "none")
    assert code == 2


def test_segments_chain(pipeline, tmp_path):
    segs = tmp_path / "segs.json"
    code, out, err = run_cli("segments", "extract", "--mask",
                             str(pipeline["pred"] / "mask.avrs"),
                             "--out", str(segs),
                             "--dem", str(pipeline["scenes"][0] / "dem.avrs"),
                             "--json")
    assert code == 0, err
    n_all = json.loads(out)["segments"]

    kept = tmp_path / "kept.json"
    code, out, err = run_cli("segments", "filter", "--segments", str(segs),
                             "--out", str(kept), "--min-area", "1200",
                             "--json")
    assert code == 0, err
    info = json.loads(out)
    assert info["kept"] + info["rejected"] == n_all

    gj = tmp_path / "out.geojson"
    code, _, err = run_cli("segments", "export", "--segments", str(kept),
                           "--out", str(gj), "--include-rejected")
    assert code == 0, err
    doc = json.loads(gj.read_text())
    assert doc["type"] == "FeatureCollection"
    assert len(doc["features"]) == n_all


def test_evaluate_command(pipeline, tmp_path):
    rep_path = tmp_path / "report.json"
    pair = (f"{pipeline['pred'] / 'prob.avrs'}:"
            f"{pipeline['scenes'][0] / 'labels.avrs'}:s21")
    sweep = ",".join(f"{0.1 * k:.1f}" for k in range(1, 10))
    code, out, err = run_cli("evaluate", "--pairs", pair, "--tau", "0.5",
                             "--sweep", sweep, "--out", str(rep_path), "--json")
    assert code == 0, err
    rep = json.loads(rep_path.read_text())
    assert rep["format_version"] == 1
    assert [s["id"] for s in rep["scenes"]] == ["s21"]
    assert len(rep["threshold_curve"]) == 9
    summary = json.loads(out)
    assert "f1" in summary


def test_json_flag_emits_single_json_object(pipeline, tmp_path):
    code, out, _ = run_cli("synth", "--out", str(tmp_path / "s"), "--size",
                           "96", "--n", "0", "--seed", "1", "--json")
    assert code == 0
    doc = json.loads(out)
    assert doc["scene_id"] == "s"
