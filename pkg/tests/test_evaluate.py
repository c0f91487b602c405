"""PCK scoring, average-response diagnostic and PGM heatmap export."""

import numpy as np
import numpy.testing as npt
import pytest

from weakpose.data import read_image
from weakpose.evaluate import (
    DEFAULT_ALPHAS,
    EvalReport,
    evaluate_model,
    export_heatmap,
    figure_diagonal,
    pck,
    write_report_csv,
)


class TestPck:
    def test_perfect_predictions(self):
        gts = np.random.default_rng(0).uniform(10, 50, size=(4, 5, 2))
        visible = np.ones((4, 5))
        norms = np.full(4, 40.0)
        overall, per_kpt, _ = pck(gts.copy(), gts, visible, norms)
        for alpha in DEFAULT_ALPHAS:
            assert overall[alpha] == 1.0
            npt.assert_array_equal(per_kpt[alpha], 1.0)

    def test_all_predictions_at_twice_threshold(self):
        gts = np.zeros((3, 2, 2))
        alpha = 0.2
        norms = np.full(3, 10.0)
        preds = gts + np.array([2 * alpha * 10.0, 0.0])
        overall, _, _ = pck(preds, gts, np.ones((3, 2)), norms, alphas=(alpha,))
        assert overall[alpha] == 0.0

    def test_counting_three_of_four(self):
        gts = np.zeros((1, 4, 2))
        preds = np.zeros((1, 4, 2))
        preds[0, 3] = [50.0, 50.0]  # far off
        overall, _, _ = pck(preds, gts, np.ones((1, 4)), np.array([10.0]), alphas=(0.2,))
        assert overall[0.2] == 0.75

    def test_only_visible_scored(self):
        gts = np.zeros((1, 3, 2))
        preds = np.full((1, 3, 2), 100.0)
        visible = np.array([[1.0, 0.0, 0.0]])
        preds[0, 0] = [0.1, 0.1]
        overall, per_kpt, counts = pck(preds, gts, visible, np.array([10.0]), alphas=(0.2,))
        assert overall[0.2] == 1.0
        assert np.isnan(per_kpt[0.2][1]) and np.isnan(per_kpt[0.2][2])
        npt.assert_array_equal(counts, [1, 0, 0])

    def test_monotone_in_alpha(self):
        rng = np.random.default_rng(1)
        gts = rng.uniform(0, 60, size=(20, 5, 2))
        preds = gts + rng.normal(scale=6.0, size=gts.shape)
        visible = (rng.uniform(size=(20, 5)) > 0.3).astype(float)
        norms = rng.uniform(20, 60, size=20)
        overall, _, _ = pck(preds, gts, visible, norms, alphas=(0.1, 0.2, 0.5))
        assert overall[0.1] <= overall[0.2] <= overall[0.5]

    def test_translation_invariance(self):
        rng = np.random.default_rng(2)
        gts = rng.uniform(0, 60, size=(8, 5, 2))
        preds = gts + rng.normal(scale=4.0, size=gts.shape)
        visible = np.ones((8, 5))
        norms = np.full(8, 30.0)
        base, _, _ = pck(preds, gts, visible, norms)
        shifted, _, _ = pck(preds + 17.0, gts + 17.0, visible, norms)
        assert base == shifted

    def test_per_keypoint_weighted_average_reconciles(self):
        rng = np.random.default_rng(3)
        gts = rng.uniform(0, 60, size=(10, 4, 2))
        preds = gts + rng.normal(scale=5.0, size=gts.shape)
        visible = (rng.uniform(size=(10, 4)) > 0.4).astype(float)
        norms = rng.uniform(20, 50, size=10)
        overall, per_kpt, counts = pck(preds, gts, visible, norms, alphas=(0.2,))
        weighted = np.nansum(per_kpt[0.2] * counts) / counts.sum()
        assert overall[0.2] == pytest.approx(weighted, abs=1e-12)


class TestFigureDiagonal:
    def test_diagonal_of_visible_bbox(self):
        locations = np.array([[0.0, 0.0], [3.0, 4.0], [100.0, 100.0]])
        visible = np.array([1.0, 1.0, 0.0])
        assert figure_diagonal(locations, visible) == pytest.approx(5.0)

    def test_floor_at_one(self):
        assert figure_diagonal(np.array([[5.0, 5.0]]), np.array([1.0])) == 1.0


class TestExportHeatmap:
    def test_floor_scaling_bytes(self, tmp_path):
        path = tmp_path / "h.pgm"
        export_heatmap(np.array([0.0, 0.5, 1.0, 0.25]), (2, 2), path)
        data = path.read_bytes()
        assert data.startswith(b"P5\n2 2\n255\n")
        assert list(data[-4:]) == [0, 127, 255, 63]

    def test_constant_row_all_zero(self, tmp_path):
        path = tmp_path / "c.pgm"
        export_heatmap(np.full(9, 0.7), (3, 3), path)
        assert list(path.read_bytes()[-9:]) == [0] * 9

    def test_round_trip_through_reader(self, tmp_path):
        rng = np.random.default_rng(4)
        values = rng.uniform(size=20)
        path = tmp_path / "r.pgm"
        export_heatmap(values, (4, 5), path)
        back = read_image(path)[:, :, 0] * 255.0
        lo, hi = values.min(), values.max()
        expected = np.floor((values - lo) / (hi - lo) * 255.0).reshape(4, 5)
        npt.assert_allclose(back, expected, atol=1e-9)

    def test_bit_deterministic(self, tmp_path):
        values = np.random.default_rng(5).uniform(size=16)
        export_heatmap(values, (4, 4), tmp_path / "a.pgm")
        export_heatmap(values, (4, 4), tmp_path / "b.pgm")
        assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()

    def test_length_mismatch_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="grid"):
            export_heatmap(np.zeros(5), (2, 2), tmp_path / "x.pgm")


class TestEvaluateModel:
    def make_setup(self):
        import weakpose as wp

        ds = wp.synth(wp.DatasetConfig(count=8, labeled_fraction=1.0, truncation_prob=0.3, seed=1))
        model = wp.WeakPoseNet(
            wp.ModelConfig(channels=8, heads=2, encoder_depth=1, decoder_depth=1, graph_layers=1),
            ds.skeleton,
            seed=0,
        )
        return model, ds

    def test_report_fields_in_range(self):
        model, ds = self.make_setup()
        report = evaluate_model(model, ds)
        assert report.sample_count == 8
        for alpha, value in report.pck.items():
            assert 0.0 <= value <= 1.0
        per = report.per_keypoint_response
        assert ((per[~np.isnan(per)] >= 0) & (per[~np.isnan(per)] <= 1)).all()

    def test_csv_layout(self, tmp_path):
        model, ds = self.make_setup()
        report = evaluate_model(model, ds)
        path = tmp_path / "report.csv"
        write_report_csv(report, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "keypoint,pck@0.1,pck@0.2,pck@0.5,avg_response"
        assert len(lines) == 1 + 5 + 1
        assert lines[-1].startswith("TOTAL,")

    def test_spike_at_ground_truth_scores_one(self):
        model, ds = self.make_setup()
        grid_hw = (16, 16)

        class Spike:
            skeleton = ds.skeleton

            def forward(self, images):
                out = model.forward(images)
                rows = out.responses.responses.data
                rows[...] = 0.0
                offset = out.memory.scale_offsets[0]
                for bi in range(images.shape[0]):
                    locations = ds.samples[bi].peek_locations()
                    for ki in range(5):
                        r = int(np.clip(np.rint((locations[ki][0] - 1.5) / 4.0), 0, 15))
                        c = int(np.clip(np.rint((locations[ki][1] - 1.5) / 4.0), 0, 15))
                        rows[bi, ki, offset + r * 16 + c] = 1.0
                from weakpose.decoder import extract_locations

                out.responses.coords = extract_locations(
                    rows, out.memory.scale_offsets, out.memory.scale_shapes, out.image_hw
                )
                return out

        report = evaluate_model(Spike(), ds, batch_size=len(ds))
        npt.assert_allclose(report.per_keypoint_response, 1.0)
        assert report.pck[0.2] == 1.0

    def test_uniform_response_flagged_degenerate(self):
        # a response row with variance below 1e-9 counts as degenerate and
        # max-normalizes to 1 at the ground-truth cell
        model, ds = self.make_setup()

        class Uniform:
            skeleton = ds.skeleton

            def forward(self, images):
                out = model.forward(images)
                out.responses.responses.data[...] = 1.0 / out.responses.responses.shape[-1]
                return out

        report = evaluate_model(Uniform(), ds)
        assert report.degenerate_rows > 0
        npt.assert_allclose(report.avg_response, 1.0)
