"""The configuration dials and how they map to the full-scale recipe.

Shows the paper-fidelity preset (256 channels, 8 heads, 4 encoder and 6
decoder layers, inputs 256x192), the loss weighting, and the per-group
learning rates.  Builds the model and runs one forward pass; no training.

Run:  python demos/06_paper_scale_settings.py
"""

import numpy as np

from weakpose import autodiff
from weakpose.config import RunConfig, load_config
from weakpose.data import COCO_SKELETON
from weakpose.model import ModelConfig, WeakPoseNet
from weakpose.optim import build_optimizer

# the defaults are desk scale; the paper preset restores full width/depth
desk = RunConfig()
print("desk model:", desk.model)
paper = ModelConfig.paper_preset()
print("paper preset:", paper)

# loss weighting: three classification read-outs plus the diversity term
w = desk.train.weights
print(f"\nloss weights: cnn {w.alpha}, encoder {w.alpha1}, final {w.alpha2}, diversity {w.beta}")
print(f"optimizer: Adam lr {desk.train.lr}, weight decay {desk.train.weight_decay}, "
      f"attention-side lr divided by {desk.train.transformer_lr_divisor}")

# full-scale skeleton and input size; one forward pass end to end
model = WeakPoseNet(paper, COCO_SKELETON, seed=0)
print(f"\npaper-preset model on the 17-keypoint skeleton: {model.parameter_count():,} parameters")

image = np.random.default_rng(0).uniform(size=(256, 192, 1))
with autodiff.no_grad():
    out = model.forward(image[None])
print("memory positions per scale:", out.memory.segment_lengths(), "total", out.memory.length)
print("response rows:", out.responses.responses.shape, "coords:", out.responses.coords.shape)

opt = build_optimizer(model, desk.train.lr, desk.train.transformer_lr_divisor)
base, reduced = opt.groups
print(f"parameter groups: {len(base.params)} at lr {base.lr}, {len(reduced.params)} at lr {reduced.lr}")
