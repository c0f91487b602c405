"""Training loops for the presence-only, weakly-semi-supervised and fully
supervised modes, with a per-epoch CSV metrics log and npz checkpoints.

Mode contract: ``weak`` strips location labels from every training sample at
load time and never reads them afterwards (the dataset's access counter
stays at zero); ``semi`` reads locations only on the labeled subset; ``full``
requires locations everywhere.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import autodiff
from .config import RunConfig, TrainSettings
from .data import PoseDataset, Sample, SkeletonSpec, augment, synth
from .decoder import part_diversity_loss
from .evaluate import evaluate_model
from .losses import (
    bce_loss,
    mse_heatmap_loss,
    peak_unit_response_maps,
    render_gaussian_heatmaps,
    semi_weak_loss,
    weak_loss,
)
from .model import ModelConfig, WeakPoseNet
from .optim import build_optimizer

CHECKPOINT_VERSION = 1
METRICS_HEADER = "epoch,loss_total,loss_cls_cnn,loss_cls_en,loss_cls_tran,loss_div,loss_mse,pck@0.2"
_SHUFFLE_KEY = 31


def save_checkpoint(model: WeakPoseNet, path) -> None:
    """Versioned npz container of named parameter arrays plus the model and
    skeleton descriptions needed to rebuild it."""
    arrays = {f"param:{name}": p.data for name, p in model.named_parameters()}
    meta = {
        "model_config": asdict(model.config),
        "skeleton_names": list(model.skeleton.names),
        "skeleton_edges": [list(e) for e in model.skeleton.edges],
    }
    np.savez(
        path,
        __version__=np.array(CHECKPOINT_VERSION),
        __meta__=np.array(json.dumps(meta)),
        **arrays,
    )


def load_checkpoint(path) -> WeakPoseNet:
    with np.load(path, allow_pickle=False) as archive:
        version = int(archive["__version__"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        meta = json.loads(str(archive["__meta__"]))
        state = {key[len("param:") :]: archive[key] for key in archive.files if key.startswith("param:")}
    skeleton = SkeletonSpec(tuple(meta["skeleton_names"]), tuple(tuple(e) for e in meta["skeleton_edges"]))
    model = WeakPoseNet(ModelConfig(**meta["model_config"]), skeleton)
    model.load_state(state)
    return model


def _strip_locations(sample: Sample) -> Sample:
    return Sample(sample.image, sample.presence, None, False, counter=sample._counter)


def prepare_mode_dataset(dataset: PoseDataset, mode: str) -> PoseDataset:
    """Enforce the supervision contract on the training split.

    weak: every sample loses its locations.  semi: each sample's own
    ``has_locations`` flag decides (see ``apply_labeled_fraction`` for
    subsampling a fully labeled set).  full: all samples must carry
    locations.
    """
    samples = dataset.samples
    if mode == "weak":
        samples = [_strip_locations(s) for s in samples]
    elif mode == "full":
        missing = sum(1 for s in samples if not s.has_locations)
        if missing:
            raise ValueError(f"full mode requires locations on every sample; {missing} lack them")
    elif mode != "semi":
        raise ValueError(f"unknown mode {mode!r}")
    out = PoseDataset(list(samples), dataset.skeleton, dataset.image_hw)
    out.location_reads = dataset.location_reads
    for s in out.samples:
        s._counter = out.location_reads
    return out


def apply_labeled_fraction(dataset: PoseDataset, fraction: float, seed: int) -> PoseDataset:
    """Keep locations on exactly floor(fraction * N) samples, chosen by a
    seeded shuffle from those that have them; strip the rest."""
    samples = dataset.samples
    want = int(np.floor(fraction * len(samples)))
    order = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_SHUFFLE_KEY, 1))).permutation(
        len(samples)
    )
    keep: set[int] = set()
    for i in order:
        if len(keep) == want:
            break
        if samples[int(i)].has_locations:
            keep.add(int(i))
    if len(keep) < want:
        raise ValueError(f"wanted {want} location-labeled samples but only {len(keep)} are available")
    out_samples = [s if i in keep else _strip_locations(s) for i, s in enumerate(samples)]
    out = PoseDataset(out_samples, dataset.skeleton, dataset.image_hw)
    out.location_reads = dataset.location_reads
    for s in out.samples:
        s._counter = out.location_reads
    return out


class Trainer:
    def __init__(
        self,
        model: WeakPoseNet,
        train_dataset: PoseDataset,
        eval_dataset: PoseDataset,
        settings: TrainSettings,
        out_dir=None,
    ):
        self.model = model
        self.train_dataset = prepare_mode_dataset(train_dataset, settings.mode)
        self.eval_dataset = eval_dataset
        self.settings = settings
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.optimizer = build_optimizer(
            model, settings.lr, settings.transformer_lr_divisor, settings.weight_decay
        )
        self.rng = np.random.default_rng(np.random.SeedSequence(settings.seed, spawn_key=(_SHUFFLE_KEY, 0)))
        self.history: list[dict] = []

    def _batch_loss(self, samples: list[Sample]):
        images = np.stack([s.image for s in samples])
        presence = np.stack([s.presence for s in samples])
        out = self.model.forward(images)
        cls_cnn = bce_loss(out.probs_cnn, presence)
        cls_en = bce_loss(out.probs_encoder, presence)
        cls_parts = bce_loss(out.probs_parts, presence)
        diversity = part_diversity_loss(out.responses.part_features)
        weak = weak_loss(cls_cnn, cls_en, cls_parts, diversity, self.settings.weights)

        mse = None
        if self.settings.mode in ("semi", "full"):
            labeled = [i for i, s in enumerate(samples) if s.has_locations]
            if labeled:
                locations = np.stack([samples[i].locations for i in labeled])
                labeled_presence = presence[labeled]
                grid_hw = out.memory.scale_shapes[0]
                targets = render_gaussian_heatmaps(
                    locations, labeled_presence, grid_hw, out.image_hw, self.settings.heatmap_sigma
                )
                maps = peak_unit_response_maps(
                    out.responses.responses,
                    out.memory.scale_offsets,
                    out.memory.scale_shapes,
                    self.settings.heatmap_sigma,
                )
                picked = autodiff.index_select(maps, np.asarray(labeled), axis=0)
                mse = mse_heatmap_loss(picked, targets)
        # the combined objective carries the supervised term at a configurable
        # weight: the raw per-cell mean is numerically inert next to the
        # classification terms at this scale; the log keeps the raw value
        scaled_mse = None
        if mse is not None:
            scaled_mse = autodiff.scale(mse, self.settings.supervised_weight)
        total = semi_weak_loss(weak, scaled_mse)
        components = {
            "loss_cls_cnn": float(cls_cnn.data),
            "loss_cls_en": float(cls_en.data),
            "loss_cls_tran": float(cls_parts.data),
            "loss_div": float(diversity.data),
            "loss_mse": float(mse.data) if mse is not None else 0.0,
            "loss_total": float(total.data),
        }
        return total, components

    def run_epoch(self) -> dict:
        settings = self.settings
        dataset = self.train_dataset
        order = self.rng.permutation(len(dataset))
        sums = {}
        seen = 0
        params = self.model.parameters()
        for start in range(0, len(order), settings.batch_size):
            idx = order[start : start + settings.batch_size]
            samples = [dataset[int(i)] for i in idx]
            if settings.augment:
                samples = [augment(s, self.rng, dataset.skeleton) for s in samples]
            total, components = self._batch_loss(samples)
            total.backward(params=params)
            self.optimizer.step()
            self.optimizer.zero_grad()
            for key, value in components.items():
                sums[key] = sums.get(key, 0.0) + value * len(samples)
            seen += len(samples)
        return {key: value / seen for key, value in sums.items()}

    def run(self, epochs: int | None = None) -> list[dict]:
        epochs = epochs if epochs is not None else self.settings.epochs
        metrics_path = self.out_dir / "metrics.csv" if self.out_dir else None
        if metrics_path:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            metrics_path.write_text(METRICS_HEADER + "\n")
        for epoch in range(1, epochs + 1):
            row = self.run_epoch()
            report = evaluate_model(self.model, self.eval_dataset)
            row["epoch"] = epoch
            row["pck@0.2"] = report.pck.get(0.2, float("nan"))
            self.history.append(row)
            if metrics_path:
                with open(metrics_path, "a") as fh:
                    fh.write(format_metrics_row(row) + "\n")
        if self.out_dir:
            save_checkpoint(self.model, self.out_dir / "checkpoint.npz")
        return self.history


def format_metrics_row(row: dict) -> str:
    cells = [str(row["epoch"])]
    for key in ("loss_total", "loss_cls_cnn", "loss_cls_en", "loss_cls_tran", "loss_div", "loss_mse", "pck@0.2"):
        cells.append(repr(float(row[key])))
    return ",".join(cells)


def train(config: RunConfig, out_dir=None, train_dataset=None, eval_dataset=None):
    """End-to-end entry point: synthesize (or accept) the data, build the
    model seeded from the config, train, and return (model, history)."""
    if train_dataset is None:
        train_dataset = synth(config.data)
    if eval_dataset is None:
        eval_dataset = synth(config.eval_data())
    model = WeakPoseNet(config.model, train_dataset.skeleton, seed=config.train.seed)
    trainer = Trainer(model, train_dataset, eval_dataset, config.train, out_dir=out_dir)
    history = trainer.run()
    return model, history
