"""
Whole-scene prediction with overlapping windows
===============================================

Scenes are larger than the network's training patches, so inference slides
a window across the scene and blends overlapping predictions with a Hann
taper. Flip/rotation test-time augmentation averages the eight dihedral
views of each window.
"""

import numpy as np

from avaseg import inference, synth
from avaseg.dataset import build_feature_stack
from avaseg.model import FcnConfig, SegModel

dem = synth.synth_dem(seed=20, size=192)
scene = synth.synth_scene(seed=20, dem=dem, n_avalanches=2)
stack = build_feature_stack(scene, "linear")

model = SegModel(FcnConfig(n_blocks=2, base_filters=8), seed=0)

# identity-only TTA first: the tiled result should track a single forward
# pass over the whole scene away from the window borders
prob_id = inference.predict_scene(model, stack, window=96, stride=48, tta=("id",))
whole = model.predict(stack.array()[np.newaxis])[0, 0]
inner = (slice(24, 168), slice(24, 168))
print("interior |tiled - whole| max: %.2e"
      % np.abs(prob_id.band(0)[inner] - whole[inner]).max())

# the full eight-transform ensemble
prob_full = inference.predict_scene(model, stack, window=96, stride=48)
print("probability range: %.3f .. %.3f"
      % (prob_full.band(0).min(), prob_full.band(0).max()))

# threshold to a binary mask
mask = inference.threshold(prob_full, tau=0.5)
print("predicted debris pixels:", int(mask.band(0).sum()))
print("(untrained weights, so the mask is noise; see demo 04 for training)")
