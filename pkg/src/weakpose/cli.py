"""Command-line surface.

Subcommands: synth, train, eval, gradcheck, export-heatmaps.  Exit codes:
0 success, 1 validation/usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

import numpy as np


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="weakpose", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory (train/ and eval/ splits)")
    p.add_argument("--config", default=None, help="config file (ini)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="section.key=value", help="config override")

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True, help="dataset directory from `synth`")
    p.add_argument("--mode", choices=["weak", "semi", "full"], default=None)
    p.add_argument("--out", required=True, help="output directory for metrics.csv and checkpoint.npz")
    p.add_argument("--set", action="append", default=[], metavar="section.key=value")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True, help="output CSV path")
    p.add_argument("--split", default="eval", choices=["train", "eval"])

    p = sub.add_parser("gradcheck", help="finite-difference checks of every differentiable op")
    p.add_argument("--module", default=None, help="only run checks whose name contains this string")

    p = sub.add_parser("export-heatmaps", help="write response and activation maps for one image as PGM files")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    return parser


def _overrides(pairs: list[str], mode: str | None = None) -> dict[str, str]:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise UsageError(f"--set needs section.key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    if mode is not None:
        overrides["train.mode"] = mode
    return overrides


def _cmd_synth(args) -> int:
    from .config import load_config
    from .data import export_dataset, synth

    config = load_config(args.config, _overrides(args.set))
    out = Path(args.out)
    train_ds = synth(config.data)
    eval_ds = synth(config.eval_data())
    export_dataset(train_ds, out / "train")
    export_dataset(eval_ds, out / "eval")
    print(f"wrote {len(train_ds)} train / {len(eval_ds)} eval samples to {out}")
    return 0


def _load_split(data_dir, split, skeleton_names=None):
    from .data import parse_annotations

    path = Path(data_dir) / split / "annotations.json"
    return parse_annotations(path, expected_keypoint_names=skeleton_names)


def _cmd_train(args) -> int:
    from .config import load_config
    from .train import Trainer, apply_labeled_fraction
    from .model import WeakPoseNet

    config = load_config(args.config, _overrides(args.set, args.mode))
    train_ds = _load_split(args.data, "train")
    eval_ds = _load_split(args.data, "eval")
    if config.train.mode == "semi":
        train_ds = apply_labeled_fraction(train_ds, config.data.labeled_fraction, config.train.seed)
    model = WeakPoseNet(config.model, train_ds.skeleton, seed=config.train.seed)
    trainer = Trainer(model, train_ds, eval_ds, config.train, out_dir=args.out)
    history = trainer.run()
    last = history[-1]
    print(f"trained {len(history)} epochs; final loss {last['loss_total']:.4f}, PCK@0.2 {last['pck@0.2']:.3f}")
    print(f"metrics: {Path(args.out) / 'metrics.csv'}  checkpoint: {Path(args.out) / 'checkpoint.npz'}")
    return 0


def _cmd_eval(args) -> int:
    from .evaluate import evaluate_model, write_report_csv
    from .train import load_checkpoint

    model = load_checkpoint(args.checkpoint)
    dataset = _load_split(args.data, args.split, skeleton_names=model.skeleton.names)
    report = evaluate_model(model, dataset)
    write_report_csv(report, args.report)
    pck = ", ".join(f"PCK@{a} {v:.3f}" for a, v in sorted(report.pck.items()))
    print(f"{report.sample_count} scored samples: {pck}; avg response {report.avg_response:.3f}")
    print(f"report: {args.report}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import format_suite, run_suite

    entries = run_suite(only=args.module)
    if not entries:
        print(f"no checks match {args.module!r}")
        return 1
    print(format_suite(entries))
    failed = [e for e in entries if not e.passed]
    print(f"{len(entries) - len(failed)}/{len(entries)} checks passed")
    return 0 if not failed else 2


def _cmd_export_heatmaps(args) -> int:
    from . import autodiff
    from .data import read_image
    from .evaluate import export_heatmap
    from .train import load_checkpoint

    model = load_checkpoint(args.checkpoint)
    image = read_image(args.image)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with autodiff.no_grad():
        outputs = model.forward(image[None])
    grid_hw = outputs.memory.scale_shapes[0]
    offset = outputs.memory.scale_offsets[0]
    length = grid_hw[0] * grid_hw[1]
    responses = outputs.responses.responses.data[0]
    cams = outputs.cams.maps.data[0]
    for ki, name in enumerate(model.skeleton.names):
        export_heatmap(responses[ki, offset : offset + length], grid_hw, out / f"response_{name}.pgm")
        export_heatmap(cams[:, :, ki].reshape(-1), cams.shape[:2], out / f"cam_{name}.pgm")
    print(f"wrote {2 * len(model.skeleton.names)} heatmaps to {out}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
    "export-heatmaps": _cmd_export_heatmaps,
}


def main(argv=None) -> int:
    from .config import ConfigError
    from .data import DataError

    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return 1
    except (ConfigError, DataError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
