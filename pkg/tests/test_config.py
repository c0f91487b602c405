"""Config files, overrides and whole-config validation."""

import pytest

from weakpose.config import ConfigError, RunConfig, load_config
from weakpose.data import COCO_SKELETON


class TestDefaults:
    def test_default_roundtrip(self):
        config = load_config(None)
        assert config.train.mode == "weak"
        assert config.data.height % 16 == 0
        assert config.train.weights.alpha == 0.2
        assert config.train.weights.alpha1 == 0.2
        assert config.train.weights.alpha2 == 0.5
        assert config.train.weights.beta == 0.1

    def test_eval_data_fully_labeled_disjoint_seed(self):
        config = load_config(None)
        eval_cfg = config.eval_data()
        assert eval_cfg.labeled_fraction == 1.0
        assert eval_cfg.seed != config.data.seed
        assert eval_cfg.count == config.eval_count


class TestFileParsing:
    def test_sections_and_values(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text(
            "[data]\nheight = 128\nwidth = 64\ncount = 10\nskeleton = coco17\n"
            "[model]\nchannels = 16\nheads = 4\n"
            "[train]\nmode = semi\nepochs = 3\nlr = 0.001\naugment = false\n"
        )
        config = load_config(path)
        assert config.data.height == 128
        assert config.data.skeleton is COCO_SKELETON
        assert config.model.channels == 16
        assert config.train.mode == "semi"
        assert config.train.augment is False
        assert config.train.lr == pytest.approx(0.001)

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config("/nonexistent/run.ini")

    def test_paper_preset(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[model]\npreset = paper\n")
        config = load_config(path)
        assert config.model.channels == 256
        assert config.model.heads == 8
        assert config.model.encoder_depth == 4
        assert config.model.decoder_depth == 6

    def test_preset_with_explicit_override(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[model]\npreset = paper\nchannels = 128\n")
        config = load_config(path)
        assert config.model.channels == 128
        assert config.model.heads == 8


class TestOverrides:
    def test_cli_override_wins(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[train]\nepochs = 7\n")
        config = load_config(path, {"train.epochs": "11", "train.mode": "full"})
        assert config.train.epochs == 11
        assert config.train.mode == "full"

    def test_bad_override_shape(self):
        with pytest.raises(ConfigError, match="section.key"):
            load_config(None, {"epochs": "3"})


class TestValidation:
    def test_all_problems_listed(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text(
            "[data]\nheight = 60\nlabeled_fraction = 1.5\n"
            "[model]\nchannels = 30\nheads = 7\n"
            "[train]\nmode = sideways\nepochs = 0\n"
        )
        with pytest.raises(ConfigError) as err:
            load_config(path)
        message = str(err.value)
        for fragment in ("multiples of 16", "labeled_fraction", "channels", "mode", "epochs"):
            assert fragment in message, f"missing {fragment} in: {message}"

    def test_unknown_key_reported(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[train]\nlearning_rate = 0.1\n")
        with pytest.raises(ConfigError, match="unknown key 'learning_rate'"):
            load_config(path)

    def test_unknown_section_reported(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[optimizer]\nlr = 0.1\n")
        with pytest.raises(ConfigError, match=r"unknown section \[optimizer\]"):
            load_config(path)

    def test_bad_value_reported(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[train]\nepochs = three\n")
        with pytest.raises(ConfigError, match="bad value"):
            load_config(path)

    def test_negative_loss_weight_rejected(self):
        with pytest.raises(ConfigError, match="nonnegative"):
            load_config(None, {"train.beta": "-0.5"})
