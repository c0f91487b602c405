"""Weakly-semi-supervised protocol: add location labels to a fraction of the
training set and watch PCK respond.  The same images and presence labels are
used at every fraction; only the number of samples carrying coordinates
changes.

A scaled-down run; raise COUNT/EPOCHS for tighter curves.

Run:  python demos/05_semi_weak_fractions.py
"""

from dataclasses import replace

from weakpose.config import RunConfig
from weakpose.data import synth
from weakpose.evaluate import evaluate_model
from weakpose.model import WeakPoseNet
from weakpose.train import Trainer

COUNT, EVAL_COUNT, EPOCHS = 192, 48, 8
FRACTIONS = (0.0, 0.25, 1.0)

base = RunConfig()
base.data.count = COUNT
base.eval_count = EVAL_COUNT
base.train.epochs = EPOCHS
base.train.batch_size = 16
base.train.augment = False
base.model.channels = 32
base.model.heads = 2
base.model.encoder_depth = 2
base.model.decoder_depth = 2

eval_ds = synth(base.eval_data())
scores = {}
for fraction in FRACTIONS:
    data_cfg = replace(base.data, labeled_fraction=fraction)
    train_ds = synth(data_cfg)  # same seed: identical images, new label subset
    model = WeakPoseNet(base.model, train_ds.skeleton, seed=base.train.seed)
    settings = replace(base.train, mode="semi" if fraction > 0 else "weak")
    trainer = Trainer(model, train_ds, eval_ds, settings)
    history = trainer.run()
    report = evaluate_model(model, eval_ds)
    scores[fraction] = report.pck[0.2]
    print(f"labeled fraction {fraction:>5.0%}: final loss {history[-1]['loss_total']:.4f}, PCK@0.2 {report.pck[0.2]:.3f}")

print("\nPCK@0.2 by labeled fraction:", {f"{k:.0%}": round(v, 3) for k, v in scores.items()})
