"""Command-line surface: subcommands, exit codes, artifact layout."""

import json
from pathlib import Path

import numpy as np
import pytest

from weakpose.cli import main


@pytest.fixture()
def tiny_ini(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(
        "[data]\ncount = 12\neval_count = 6\nlabeled_fraction = 1.0\n"
        "[model]\nchannels = 8\nheads = 2\nencoder_depth = 1\ndecoder_depth = 1\ngraph_layers = 1\n"
        "[train]\nepochs = 1\nbatch_size = 6\naugment = false\n"
    )
    return path


@pytest.fixture()
def data_dir(tmp_path, tiny_ini):
    out = tmp_path / "data"
    assert main(["synth", "--config", str(tiny_ini), "--out", str(out)]) == 0
    return out


class TestSynth:
    def test_layout(self, data_dir):
        assert (data_dir / "train" / "annotations.json").exists()
        assert (data_dir / "eval" / "annotations.json").exists()
        doc = json.loads((data_dir / "train" / "annotations.json").read_text())
        assert len(doc["annotations"]) == 12
        first_image = data_dir / "train" / doc["images"][0]["file"]
        assert first_image.exists()

    def test_bad_config_exits_one(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[data]\nheight = 60\n")
        assert main(["synth", "--config", str(bad), "--out", str(tmp_path / "d")]) == 1


class TestTrainEvalPipeline:
    def test_end_to_end(self, tmp_path, tiny_ini, data_dir):
        run_dir = tmp_path / "run"
        code = main(
            ["train", "--config", str(tiny_ini), "--data", str(data_dir), "--mode", "weak", "--out", str(run_dir)]
        )
        assert code == 0
        metrics = (run_dir / "metrics.csv").read_text().strip().splitlines()
        assert metrics[0].startswith("epoch,loss_total")
        assert len(metrics) == 2

        report = tmp_path / "report.csv"
        code = main(
            ["eval", "--checkpoint", str(run_dir / "checkpoint.npz"), "--data", str(data_dir), "--report", str(report)]
        )
        assert code == 0
        lines = report.read_text().strip().splitlines()
        assert lines[0] == "keypoint,pck@0.1,pck@0.2,pck@0.5,avg_response"
        assert lines[-1].startswith("TOTAL,")

    def test_weak_mode_ignores_corrupted_locations(self, tmp_path, tiny_ini, data_dir):
        run_a = tmp_path / "run_a"
        assert main(["train", "--config", str(tiny_ini), "--data", str(data_dir), "--mode", "weak", "--out", str(run_a)]) == 0

        ann_path = data_dir / "train" / "annotations.json"
        doc = json.loads(ann_path.read_text())
        for ann in doc["annotations"]:
            kps = ann["keypoints"]
            for i in range(0, len(kps), 3):
                if kps[i + 2] == 2:
                    kps[i], kps[i + 1] = 1.0, 1.0
        ann_path.write_text(json.dumps(doc))

        run_b = tmp_path / "run_b"
        assert main(["train", "--config", str(tiny_ini), "--data", str(data_dir), "--mode", "weak", "--out", str(run_b)]) == 0
        assert (run_a / "metrics.csv").read_text() == (run_b / "metrics.csv").read_text()

    def test_semi_mode(self, tmp_path, tiny_ini, data_dir):
        run_dir = tmp_path / "semi"
        code = main(
            [
                "train", "--config", str(tiny_ini), "--data", str(data_dir),
                "--mode", "semi", "--out", str(run_dir),
                "--set", "data.labeled_fraction=0.5",
            ]
        )
        assert code == 0
        assert (run_dir / "checkpoint.npz").exists()


class TestExportHeatmaps:
    def test_writes_pgms(self, tmp_path, tiny_ini, data_dir):
        run_dir = tmp_path / "run"
        main(["train", "--config", str(tiny_ini), "--data", str(data_dir), "--mode", "weak", "--out", str(run_dir)])
        doc = json.loads((data_dir / "eval" / "annotations.json").read_text())
        image_path = data_dir / "eval" / doc["images"][0]["file"]
        out = tmp_path / "maps"
        code = main(
            ["export-heatmaps", "--checkpoint", str(run_dir / "checkpoint.npz"), "--image", str(image_path), "--out", str(out)]
        )
        assert code == 0
        pgms = sorted(p.name for p in out.glob("*.pgm"))
        assert "response_head.pgm" in pgms
        assert "cam_left_hand.pgm" in pgms
        assert len(pgms) == 10


class TestGradcheckCommand:
    def test_single_module_passes(self, capsys):
        assert main(["gradcheck", "--module", "matmul"]) == 0
        out = capsys.readouterr().out
        assert "matmul" in out and "PASS" in out

    def test_unknown_module_exits_one(self):
        assert main(["gradcheck", "--module", "nosuchop"]) == 1


class TestUsageErrors:
    def test_unknown_flag_exits_one(self, capsys):
        assert main(["gradcheck", "--bogus"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_command_exits_one(self):
        assert main(["frobnicate"]) == 1

    def test_missing_required_exits_one(self):
        assert main(["train"]) == 1
