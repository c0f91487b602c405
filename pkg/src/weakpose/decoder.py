"""Pose decoder: cross-attention from prototypes into the context memory.

The final layer's head-averaged attention weights are the part-aware
response maps; each keypoint's part feature is its response-weighted pool of
the memory, and its location is the argmax of the response restricted to the
highest-resolution memory segment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff, nn
from .autodiff import Tensor
from .encoder import AttentionBlock, ContextMemory


@dataclass
class ResponseSet:
    """Per-keypoint response rows over all memory positions, the pooled part
    features, and the decoded image-space (row, col) coordinates.

    ``responses`` is (..., K, L) with each row a probability vector;
    ``part_features`` is (..., K, C); ``coords`` is float (..., K, 2).
    """

    responses: Tensor
    part_features: Tensor
    coords: np.ndarray
    queries: Tensor


class PoseDecoder(nn.Module):
    def __init__(
        self,
        channels: int,
        heads: int,
        depth: int,
        rng: np.random.Generator,
        ffn_multiplier: int = 4,
    ):
        if depth < 1:
            raise ValueError(f"decoder depth must be >= 1, got {depth}")
        self.layers = [AttentionBlock(channels, heads, rng, ffn_multiplier) for _ in range(depth)]

    def decode(self, prototypes: Tensor, memory: ContextMemory, image_hw: tuple[int, int]) -> ResponseSet:
        """Run the cross-attention stack and read out responses, features and
        coordinates."""
        q = autodiff.as_tensor(prototypes)
        weights = None
        for layer in self.layers:
            q, weights = layer(q, context=memory.memory)
        responses = autodiff.mean(weights, axis=-3)  # head average: (..., K, L)
        part_features = autodiff.matmul(responses, memory.memory)
        coords = extract_locations(responses.data, memory.scale_offsets, memory.scale_shapes, image_hw)
        return ResponseSet(responses, part_features, coords, q)


def aggregate_response_grid(
    responses: np.ndarray,
    scale_offsets: tuple[int, ...],
    scale_shapes: tuple[tuple[int, int], ...],
) -> np.ndarray:
    """Fold a multi-scale response row onto the highest-resolution grid.

    Mass-conserving: a coarse cell's value spreads evenly over the finer
    cells it covers, so the result is a distribution over (..., H1, W1).
    """
    h1, w1 = scale_shapes[0]
    total = np.zeros(responses.shape[:-1] + (h1, w1))
    for (hs, ws), start in zip(scale_shapes, scale_offsets):
        grid = responses[..., start : start + hs * ws].reshape(responses.shape[:-1] + (hs, ws))
        fr, fc = h1 // hs, w1 // ws
        if fr > 1 or fc > 1:
            grid = np.repeat(np.repeat(grid, fr, axis=-2), fc, axis=-1) / (fr * fc)
        total += grid
    return total


def extract_locations(
    responses: np.ndarray,
    scale_offsets: tuple[int, ...],
    scale_shapes: tuple[tuple[int, int], ...],
    image_hw: tuple[int, int],
) -> np.ndarray:
    """Image-space (row, col) per keypoint from the response rows.

    The row folds onto the highest-resolution grid (coarse segments spread
    over the cells they cover); the argmax cell (first in row-major order on
    ties) maps to pixels at its center: coordinate = cell * stride +
    stride/2 - 0.5.
    """
    h0, w0 = scale_shapes[0]
    grid = aggregate_response_grid(responses, scale_offsets, scale_shapes)
    idx = grid.reshape(grid.shape[:-2] + (h0 * w0,)).argmax(axis=-1)
    rows = idx // w0
    cols = idx % w0
    stride_r = image_hw[0] / h0
    stride_c = image_hw[1] / w0
    coords = np.stack(
        [rows * stride_r + stride_r / 2.0 - 0.5, cols * stride_c + stride_c / 2.0 - 0.5],
        axis=-1,
    )
    return coords


def part_diversity_loss(part_features: Tensor, eps: float = 1e-8) -> Tensor:
    """Mean cosine similarity over ordered pairs of distinct part features.

    1.0 when all features align, 0.0 for pairwise-orthogonal sets; applied
    per image and averaged over any leading batch axes.
    """
    f = autodiff.as_tensor(part_features)
    k = f.shape[-2]
    if k < 2:
        raise ValueError(f"part diversity needs at least 2 features, got {k}")
    sq = autodiff.sum_(autodiff.mul(f, f), axis=-1, keepdims=True)
    norms = autodiff.add(autodiff.sqrt(sq), eps)
    unit = autodiff.div(f, norms)
    gram = autodiff.matmul(unit, autodiff.swapaxes(unit, -1, -2))
    eye = Tensor(np.eye(k))
    off_diag_sum = autodiff.sum_(gram) - autodiff.sum_(autodiff.mul(gram, eye))
    batch = int(np.prod(f.shape[:-2])) if f.ndim > 2 else 1
    return autodiff.scale(off_diag_sum, 1.0 / (batch * k * (k - 1)))
