"""Feature pyramid: extents, determinism, parameter accounting."""

import numpy as np
import numpy.testing as npt
import pytest

from weakpose import autodiff
from weakpose.autodiff import ShapeError, Tensor
from weakpose.backbone import FeaturePyramidBackbone


def make_backbone(width=16, in_channels=1, convs_per_block=2, seed=0):
    return FeaturePyramidBackbone(
        np.random.default_rng(seed), in_channels=in_channels, width=width, convs_per_block=convs_per_block
    )


class TestExtract:
    def test_paper_input_size_256x192(self):
        bb = make_backbone()
        pyramid = bb.extract(Tensor(np.zeros((256, 192, 1))))
        assert pyramid.f1.shape == (64, 48, 16)
        assert pyramid.f2.shape == (32, 24, 16)
        assert pyramid.f3.shape == (16, 12, 16)

    def test_64x64(self):
        pyramid = make_backbone().extract(Tensor(np.zeros((64, 64, 1))))
        assert pyramid.f1.shape == (16, 16, 16)
        assert pyramid.f2.shape == (8, 8, 16)
        assert pyramid.f3.shape == (4, 4, 16)

    def test_zero_image_finite(self):
        pyramid = make_backbone().extract(Tensor(np.zeros((64, 64, 1))))
        for level in pyramid.levels:
            assert np.isfinite(level.data).all()

    def test_non_multiple_of_16_rejected(self):
        with pytest.raises(ShapeError, match="16"):
            make_backbone().extract(Tensor(np.zeros((60, 64, 1))))

    def test_wrong_channels_rejected(self):
        with pytest.raises(ShapeError):
            make_backbone().extract(Tensor(np.zeros((64, 64, 2))))

    def test_batched(self):
        pyramid = make_backbone().extract(Tensor(np.zeros((2, 64, 64, 1))))
        assert pyramid.f1.shape == (2, 16, 16, 16)

    def test_determinism(self):
        bb = make_backbone()
        img = np.random.default_rng(1).uniform(size=(64, 64, 1))
        a = bb.extract(Tensor(img)).f3.data
        b = bb.extract(Tensor(img)).f3.data
        assert (a == b).all()

    def test_gradient_reaches_image(self):
        bb = make_backbone()
        img = Tensor(np.random.default_rng(2).uniform(size=(64, 64, 1)), requires_grad=True)
        pyramid = bb.extract(img)
        autodiff.sum_(autodiff.mul(pyramid.f3, pyramid.f3)).backward()
        assert img.grad is not None and np.abs(img.grad).max() > 0


class TestDescribe:
    def test_parameter_count_matches_hand_count(self):
        bb = make_backbone(width=16, in_channels=1, convs_per_block=2)
        # stem 3x3x1x4+4; blocks (3x3x4x8+8, 3x3x8x8+8), (3x3x8x12+12, 3x3x12x12+12),
        # (3x3x12x16+16, 3x3x16x16+16); laterals 1x1x{8,12,16}x16+16 each
        expected = (
            (9 * 1 * 4 + 4)
            + (9 * 4 * 8 + 8) + (9 * 8 * 8 + 8)
            + (9 * 8 * 12 + 12) + (9 * 12 * 12 + 12)
            + (9 * 12 * 16 + 16) + (9 * 16 * 16 + 16)
            + (8 * 16 + 16) + (12 * 16 + 16) + (16 * 16 + 16)
        )
        assert bb.parameter_count() == expected
        assert f"total params {expected}" in bb.describe()

    def test_zero_conv_block_rejected(self):
        with pytest.raises(ValueError, match="convs_per_block"):
            make_backbone(convs_per_block=0)

    def test_doubling_width_quadruples_internal_conv_weights(self):
        small = make_backbone(width=16)
        large = make_backbone(width=32)
        assert large.conv_weight_count(include_stem=False) == 4 * small.conv_weight_count(include_stem=False)
