"""From classifier weights to activation maps to the coarse location masks
that seed the encoder's position encoding.

Run:  python demos/03_activation_maps_and_masks.py  (writes demo_out/maps/)
"""

from pathlib import Path

import numpy as np

from weakpose import autodiff
from weakpose.data import DatasetConfig, synth
from weakpose.evaluate import export_heatmap
from weakpose.model import ModelConfig, WeakPoseNet

out = Path("demo_out/maps")
out.mkdir(parents=True, exist_ok=True)

dataset = synth(DatasetConfig(count=4, labeled_fraction=1.0, truncation_prob=0.0, seed=2))
model = WeakPoseNet(ModelConfig(channels=32, heads=2, encoder_depth=2, decoder_depth=2), dataset.skeleton, seed=0)

sample = dataset.samples[0]
with autodiff.no_grad():
    outputs = model.forward(sample.image[None])

# activation maps: relu of the keypoint-channel features mixed with the
# classifier's own weight column, one map per keypoint
cams = outputs.cams.maps.data[0]
print("activation map grid:", cams.shape[:2], "per", cams.shape[2], "keypoints; min >= 0:", cams.min() >= 0)

# peaks and the per-scale location masks (binary, one-cell dilation)
print("peaks (1/4-grid rows, cols):")
for name, peak in zip(dataset.skeleton.names, outputs.coarse.peaks[0]):
    print(f"  {name:<11} {tuple(int(v) for v in peak)}")
for i, mask in enumerate(outputs.coarse.masks):
    print(f"scale {i} mask: {mask.shape[1:]} with {int(mask[0].sum())} active cells")

# untrained maps are noise; export them anyway to show the PGM pipeline
for ki, name in enumerate(dataset.skeleton.names):
    export_heatmap(cams[:, :, ki].reshape(-1), cams.shape[:2], out / f"cam_{name}.pgm")
print(f"wrote {len(dataset.skeleton.names)} activation maps to {out}")

# ground truth for reference
print("true keypoints (pixels):")
for name, loc, present in zip(dataset.skeleton.names, sample.peek_locations(), sample.presence):
    print(f"  {name:<11} ({loc[0]:5.1f}, {loc[1]:5.1f}) present={int(present)}")
