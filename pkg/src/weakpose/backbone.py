"""Small convolutional feature extractor with a three-level pyramid.

The pyramid levels sit at 1/4, 1/8 and 1/16 of the input resolution, all
projected to a shared channel width so the attention stages downstream can
treat every level uniformly.  Internal widths scale with the model width, so
doubling the width quadruples the weight count of every internal conv.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff, nn
from .autodiff import ShapeError, Tensor


@dataclass
class PyramidFeatures:
    """Feature maps at 1/4, 1/8 and 1/16 of the input extents, all with the
    same channel width."""

    f1: Tensor
    f2: Tensor
    f3: Tensor

    @property
    def levels(self) -> tuple[Tensor, Tensor, Tensor]:
        return (self.f1, self.f2, self.f3)


class FeaturePyramidBackbone(nn.Module):
    """Stem (stride 2) followed by three stride-2 blocks of 3x3 convs, with
    1x1 lateral projections bringing every level to ``width`` channels."""

    def __init__(
        self,
        rng: np.random.Generator,
        in_channels: int = 1,
        width: int = 64,
        convs_per_block: int = 2,
    ):
        if width % 4 != 0:
            raise ValueError(f"width must be a multiple of 4, got {width}")
        if convs_per_block < 1:
            raise ValueError(f"convs_per_block must be >= 1, got {convs_per_block}")
        if in_channels not in (1, 3):
            raise ValueError(f"in_channels must be 1 or 3, got {in_channels}")
        self.width = width
        self.in_channels = in_channels
        self.convs_per_block = convs_per_block
        w = width
        block_widths = [w // 2, 3 * w // 4, w]
        self.stem = nn.Conv2d(in_channels, w // 4, 3, rng, stride=2, padding=1)
        self.blocks = []
        prev = w // 4
        for bw in block_widths:
            convs = [nn.Conv2d(prev, bw, 3, rng, stride=2, padding=1)]
            for _ in range(convs_per_block - 1):
                convs.append(nn.Conv2d(bw, bw, 3, rng, stride=1, padding=1))
            self.blocks.append(convs)
            prev = bw
        self.laterals = [nn.Conv2d(bw, w, 1, rng) for bw in block_widths]

    def extract(self, image) -> PyramidFeatures:
        """Run the pyramid on an (H, W, ch) or (B, H, W, ch) image."""
        image = autodiff.as_tensor(image)
        h, w = image.shape[-3], image.shape[-2]
        if h % 16 != 0 or w % 16 != 0:
            raise ShapeError(f"image extents must be multiples of 16, got {h}x{w}")
        if image.shape[-1] != self.in_channels:
            raise ShapeError(f"expected {self.in_channels} image channels, got {image.shape[-1]}")
        x = autodiff.relu(self.stem(image))
        levels = []
        for convs, lateral in zip(self.blocks, self.laterals):
            for conv in convs:
                x = autodiff.relu(conv(x))
            levels.append(lateral(x))
        return PyramidFeatures(*levels)

    def describe(self) -> str:
        """Human-readable layer list with per-layer and total parameter counts."""
        lines = []
        total = 0

        def row(name, conv):
            nonlocal total
            kh, kw, cin, cout = conv.weight.data.shape
            n = conv.weight.data.size + (conv.bias.data.size if conv.bias is not None else 0)
            total += n
            lines.append(f"{name:<12} {kh}x{kw} {cin:>3} -> {cout:<3} stride {conv.stride}  params {n}")

        row("stem", self.stem)
        for b, convs in enumerate(self.blocks):
            for c, conv in enumerate(convs):
                row(f"block{b + 1}.{c}", conv)
        for i, lat in enumerate(self.laterals):
            row(f"lateral{i + 1}", lat)
        lines.append(f"total params {total}")
        return "\n".join(lines)

    def conv_weight_count(self, include_stem: bool = True) -> int:
        """Weight-only (bias excluded) count over the conv layers."""
        convs = [c for block in self.blocks for c in block] + list(self.laterals)
        if include_stem:
            convs.append(self.stem)
        return sum(c.weight.data.size for c in convs)
