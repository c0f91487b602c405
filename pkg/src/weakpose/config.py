"""Flat ``key = value`` configuration files with [data], [model] and [train]
sections, merged with command-line overrides and validated as a whole:
startup fails with every problem listed, not just the first.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .data import COCO_SKELETON, STICK_FIGURE_SKELETON, DatasetConfig
from .losses import LossWeights
from .model import ModelConfig

EVAL_SEED_OFFSET = 1_000_003  # eval split draws from a disjoint seed stream

SKELETONS = {
    "stick_figure": STICK_FIGURE_SKELETON,
    "coco17": COCO_SKELETON,
}


class ConfigError(ValueError):
    """Invalid configuration; the message lists every problem found."""


@dataclass
class TrainSettings:
    mode: str = "weak"  # weak | semi | full
    epochs: int = 16
    batch_size: int = 16
    lr: float = 4e-3
    transformer_lr_divisor: float = 10.0
    weight_decay: float = 1e-4
    weights: LossWeights = field(default_factory=LossWeights)
    supervised_weight: float = 10.0
    augment: bool = False
    heatmap_sigma: float = 2.0
    seed: int = 0

    def validate(self) -> list[str]:
        problems = []
        if self.mode not in ("weak", "semi", "full"):
            problems.append(f"train.mode must be weak, semi or full, got {self.mode!r}")
        if self.epochs < 1:
            problems.append(f"train.epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            problems.append(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            problems.append(f"train.lr must be > 0, got {self.lr}")
        if self.transformer_lr_divisor <= 0:
            problems.append(f"train.transformer_lr_divisor must be > 0, got {self.transformer_lr_divisor}")
        if self.weight_decay < 0:
            problems.append(f"train.weight_decay must be >= 0, got {self.weight_decay}")
        if self.heatmap_sigma <= 0:
            problems.append(f"train.heatmap_sigma must be > 0, got {self.heatmap_sigma}")
        if self.supervised_weight < 0:
            problems.append(f"train.supervised_weight must be >= 0, got {self.supervised_weight}")
        problems.extend(self.weights.validate())
        return problems


@dataclass
class RunConfig:
    data: DatasetConfig = field(default_factory=DatasetConfig)
    eval_count: int = 200
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSettings = field(default_factory=TrainSettings)

    def validate(self) -> list[str]:
        problems = list(self.data.validate())
        if self.eval_count < 1:
            problems.append(f"data.eval_count must be >= 1, got {self.eval_count}")
        problems.extend(self.model.validate())
        problems.extend(self.train.validate())
        return problems

    def eval_data(self) -> DatasetConfig:
        """Eval-split generator config: full location labels (needed for
        metrics only), disjoint seed stream."""
        return replace(
            self.data,
            count=self.eval_count,
            labeled_fraction=1.0,
            seed=self.data.seed + EVAL_SEED_OFFSET,
        )


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}

# section -> key -> (target object attr path, converter)
_SCHEMA = {
    "data": {
        "height": ("data.height", int),
        "width": ("data.width", int),
        "count": ("data.count", int),
        "eval_count": ("eval_count", int),
        "labeled_fraction": ("data.labeled_fraction", float),
        "truncation_prob": ("data.truncation_prob", float),
        "seed": ("data.seed", int),
        "channels": ("data.channels", int),
        "skeleton": ("data.skeleton", "skeleton"),
    },
    "model": {
        "preset": (None, "preset"),
        "channels": ("model.channels", int),
        "heads": ("model.heads", int),
        "encoder_depth": ("model.encoder_depth", int),
        "decoder_depth": ("model.decoder_depth", int),
        "ffn_multiplier": ("model.ffn_multiplier", int),
        "vector_dim": ("model.vector_dim", int),
        "graph_layers": ("model.graph_layers", int),
        "convs_per_block": ("model.convs_per_block", int),
        "use_spatial_encoding": ("model.use_spatial_encoding", "bool"),
        "use_multiscale": ("model.use_multiscale", "bool"),
        "use_graph_prototypes": ("model.use_graph_prototypes", "bool"),
        "share_encoder_scales": ("model.share_encoder_scales", "bool"),
        "mask_mode": ("model.mask_mode", str),
    },
    "train": {
        "mode": ("train.mode", str),
        "epochs": ("train.epochs", int),
        "batch_size": ("train.batch_size", int),
        "lr": ("train.lr", float),
        "transformer_lr_divisor": ("train.transformer_lr_divisor", float),
        "weight_decay": ("train.weight_decay", float),
        "alpha": ("train.weights.alpha", float),
        "alpha1": ("train.weights.alpha1", float),
        "alpha2": ("train.weights.alpha2", float),
        "beta": ("train.weights.beta", float),
        "supervised_weight": ("train.supervised_weight", float),
        "augment": ("train.augment", "bool"),
        "heatmap_sigma": ("train.heatmap_sigma", float),
        "seed": ("train.seed", int),
    },
}


def _assign(config: RunConfig, path: str, value) -> None:
    parts = path.split(".")
    target = config
    for p in parts[:-1]:
        target = getattr(target, p)
    setattr(target, parts[-1], value)


def _apply_pairs(config: RunConfig, pairs: list[tuple[str, str, str]], problems: list[str]) -> None:
    preset = None
    for section, key, raw in pairs:
        if section == "model" and key == "preset":
            preset = raw.strip().lower()
            continue
        spec = _SCHEMA.get(section, {}).get(key)
        if spec is None:
            problems.append(f"unknown key {key!r} in section [{section}]")
            continue
        path, conv = spec
        try:
            if conv == "bool":
                value = _BOOL[raw.strip().lower()]
            elif conv == "skeleton":
                value = SKELETONS[raw.strip().lower()]
            else:
                value = conv(raw)
        except (ValueError, KeyError):
            problems.append(f"bad value for [{section}] {key}: {raw!r}")
            continue
        _assign(config, path, value)
    if preset is not None:
        if preset == "paper":
            config.model = ModelConfig.paper_preset()
        elif preset != "desk":
            problems.append(f"bad value for [model] preset: {preset!r} (desk or paper)")
        # re-apply explicit model keys over the preset
        for section, key, raw in pairs:
            if section != "model" or key == "preset":
                continue
            spec = _SCHEMA["model"].get(key)
            if spec is None:
                continue
            path, conv = spec
            try:
                value = _BOOL[raw.strip().lower()] if conv == "bool" else conv(raw)
            except (ValueError, KeyError):
                continue
            _assign(config, path, value)


def load_config(path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Build a RunConfig from an optional config file plus ``section.key``
    override strings (command-line flags); raises ConfigError listing every
    problem."""
    problems: list[str] = []
    pairs: list[tuple[str, str, str]] = []
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            if section not in _SCHEMA:
                problems.append(f"unknown section [{section}]")
                continue
            for key, raw in parser.items(section):
                pairs.append((section, key, raw))
    for dotted, raw in (overrides or {}).items():
        if "." not in dotted:
            problems.append(f"override {dotted!r} must look like section.key")
            continue
        section, key = dotted.split(".", 1)
        pairs.append((section, key, raw))

    config = RunConfig()
    _apply_pairs(config, pairs, problems)
    problems.extend(config.validate())
    if problems:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))
    return config


DEFAULT_CONFIG_TEXT = """\
# weakpose configuration (key = value, three sections; all keys optional)

[data]
height = 64
width = 64
count = 800
eval_count = 200
labeled_fraction = 0.0
truncation_prob = 0.6
seed = 0
channels = 1
skeleton = stick_figure

[model]
# preset = paper          # 256 channels, 8 heads, 4 encoder / 6 decoder layers
channels = 48
heads = 2
encoder_depth = 2
decoder_depth = 2
graph_layers = 2
use_spatial_encoding = true
use_multiscale = true
use_graph_prototypes = true
share_encoder_scales = true
mask_mode = binary

[train]
mode = weak
epochs = 16
batch_size = 16
lr = 0.004
transformer_lr_divisor = 10
weight_decay = 0.0001
alpha = 0.2
alpha1 = 0.2
alpha2 = 0.5
beta = 0.1
supervised_weight = 10
augment = false
heatmap_sigma = 2.0
seed = 0
"""
