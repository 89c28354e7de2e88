"""
The full pipeline through the command line
==========================================

Every stage is also a subcommand of the `ava` tool. This script drives the
whole chain on a synthetic scene: generate, train a toy model, predict,
extract segments, and score the result.
"""

import json
import tempfile
from pathlib import Path

from avaseg.cli import main

work = Path(tempfile.mkdtemp())
print("working in", work)


def run(*argv):
    print("$ ava", " ".join(argv))
    code = main(list(argv))
    assert code == 0, f"exit code {code}"


# two labeled scenes: one to train on, one to score against
for seed in (31, 32):
    run("synth", "--out", str(work / f"scene{seed}"), "--size", "96",
        "--n", "1", "--seed", str(seed))

# patch dataset with a held-out validation scene
run("dataset", "build", "--scenes", str(work / "scene31"), str(work / "scene32"),
    "--out", str(work / "ds"), "--size", "64", "--neg-keep", "1.0")
run("dataset", "split", "--manifest", str(work / "ds" / "manifest.json"),
    "--val-fraction", "0.5")

# a toy configuration so the demo finishes in seconds
cfg = work / "cfg.json"
cfg.write_text(json.dumps({"model": {"n_blocks": 2, "base_filters": 4},
                           "train": {"epochs": 2, "batch_size": 2,
                                     "lr": 1e-3, "augment": False}}))
run("train", "--dataset", str(work / "ds"), "--out", str(work / "run"),
    "--config", str(cfg))

# tiled prediction and segment extraction on scene 31
run("predict", "--weights", str(work / "run" / "weights.avw"),
    "--scene", str(work / "scene31"), "--out", str(work / "pred"),
    "--window", "64", "--stride", "32", "--tta", "none")
run("segments", "extract", "--mask", str(work / "pred" / "mask.avrs"),
    "--out", str(work / "segs.json"),
    "--dem", str(work / "scene31" / "dem.avrs"))
run("segments", "export", "--segments", str(work / "segs.json"),
    "--out", str(work / "debris.geojson"))

# score the probabilities against the known labels
run("evaluate", "--pairs",
    f"{work / 'pred' / 'prob.avrs'}:{work / 'scene31' / 'labels.avrs'}:demo",
    "--tau", "0.5", "--out", str(work / "report.json"))

report = json.loads((work / "report.json").read_text())
print("scenes scored:", [s["id"] for s in report["scenes"]])
print("(two epochs of a toy model; scores are not meaningful)")
