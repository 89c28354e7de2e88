"""
Training a small segmentation model on synthetic patches
========================================================

Builds a four-scene patch dataset, trains a deliberately tiny network for a
few epochs, and prints the history. The full-size configuration is the
same code with FcnConfig() defaults and more epochs.
"""

import tempfile
from pathlib import Path

from avaseg import synth
from avaseg.dataset import (DatasetManifest, PatchRecord, build_feature_stack,
                            extract_patches, save_patch, split_scenes)
from avaseg.model import FcnConfig, SegModel, TrainConfig, history_to_csv, train

work = Path(tempfile.mkdtemp())

# one 96x96 patch per scene, picked for maximum debris content
records = []
for seed in range(4):
    dem = synth.synth_dem(seed, size=192)
    scene = synth.synth_scene(seed, dem, n_avalanches=2)
    stack = build_feature_stack(scene, "linear")
    patches = extract_patches(stack, scene.labels, f"s{seed}", size=96,
                              neg_keep_rate=0.0, min_pos_fraction=0.001, seed=0)
    best = max(patches, key=lambda p: p.pos_pixels)
    sid, row, col = best.origin
    name = f"{sid}.avrs"
    save_patch(best, scene.dem.grid.shifted(row, col, 96, 96), work / name)
    records.append(PatchRecord(path=name, scene_id=sid, row=row, col=col,
                               pos_pixels=best.pos_pixels,
                               valid_pixels=best.valid_pixels))

manifest = DatasetManifest(patches=records, splits={})
manifest.recompute_totals()
manifest = split_scenes(manifest, val_fraction=0.25, seed=0)
print("train scenes:", sorted(s for s, v in manifest.splits.items() if v == "train"))
print("val scenes:  ", sorted(s for s, v in manifest.splits.items() if v == "val"))

# a small net and a short run; everything is seeded, so rerunning this
# script reproduces the identical history
model = SegModel(FcnConfig(n_blocks=2, base_filters=8), seed=0)
cfg = TrainConfig(epochs=3, batch_size=2, lr=1e-3, pos_weight=20.0,
                  augment=False, seed=0)
best_state, history = train(model, manifest, cfg, work)
print(history_to_csv(history))
print("parameters:", model.parameter_count())
