"""Train the full model from presence labels only, then inspect what it
learned: per-keypoint accuracy, response quality, and prototype affinity.

A scaled-down run (a few minutes on CPU); raise EPOCHS/COUNT for the real
configuration.

Run:  python demos/04_train_weak_and_inspect.py  (writes demo_out/weak_run/)
"""

import numpy as np

from weakpose.config import RunConfig
from weakpose.evaluate import evaluate_model
from weakpose.graph import prototype_affinity
from weakpose.model import WeakPoseNet
from weakpose.train import Trainer
from weakpose import autodiff
from weakpose.data import synth

COUNT, EVAL_COUNT, EPOCHS = 192, 48, 8

config = RunConfig()
config.data.count = COUNT
config.eval_count = EVAL_COUNT
config.train.epochs = EPOCHS
config.train.batch_size = 16
config.train.augment = False
config.model.channels = 32
config.model.heads = 2
config.model.encoder_depth = 2
config.model.decoder_depth = 2

train_ds = synth(config.data)
eval_ds = synth(config.eval_data())
model = WeakPoseNet(config.model, train_ds.skeleton, seed=config.train.seed)

before = evaluate_model(model, eval_ds)
print(f"untrained: PCK@0.2 {before.pck[0.2]:.3f}, avg response {before.avg_response:.3f}")

trainer = Trainer(model, train_ds, eval_ds, config.train, out_dir="demo_out/weak_run")
for row in trainer.run():
    print(
        f"epoch {row['epoch']:>2}  loss {row['loss_total']:.4f}  "
        f"cls(cnn/en/tran) {row['loss_cls_cnn']:.3f}/{row['loss_cls_en']:.3f}/{row['loss_cls_tran']:.3f}  "
        f"diversity {row['loss_div']:+.3f}  PCK@0.2 {row['pck@0.2']:.3f}"
    )
print("note: weak mode never touched a coordinate:", train_ds.location_reads.reads == 0)

after = evaluate_model(model, eval_ds)
print(f"\ntrained:   PCK@0.2 {after.pck[0.2]:.3f}, avg response {after.avg_response:.3f}")
print("per-keypoint PCK@0.2:")
for name, v in zip(eval_ds.skeleton.names, after.per_keypoint_pck[0.2]):
    print(f"  {name:<11} {v:.3f}")

# prototype affinity: symmetric parts should end up more related than
# arbitrary non-adjacent pairs (the learned-relations diagnostic)
sample = eval_ds.samples[0]
with autodiff.no_grad():
    outputs = model.forward(sample.image[None])
affinity = prototype_affinity(outputs.prototypes.data[0])
print("\nprototype affinity (rows = keypoints):")
for name, row in zip(eval_ds.skeleton.names, affinity):
    print(f"  {name:<11} " + " ".join(f"{v:+.2f}" for v in row))
