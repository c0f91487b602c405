"""Loss stack: per-keypoint presence BCE at three read-out points, the part
diversity penalty, the heatmap MSE for location-labeled samples, and their
weighted combinations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff
from .autodiff import Tensor

PROB_EPS = 1e-7


@dataclass
class LossWeights:
    """Weights for the classification heads (CNN, encoder, final prediction)
    and the diversity term."""

    alpha: float = 0.2
    alpha1: float = 0.2
    alpha2: float = 0.5
    beta: float = 0.1

    def validate(self) -> list[str]:
        bad = [n for n in ("alpha", "alpha1", "alpha2", "beta") if getattr(self, n) < 0]
        return [f"loss weight {n} must be nonnegative" for n in bad]


def bce_loss(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Mean over keypoints (and any batch axes) of binary cross entropy.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs.
    """
    probs = autodiff.as_tensor(probs)
    labels = np.asarray(labels, dtype=np.float64)
    p = autodiff.clamp(probs, PROB_EPS, 1.0 - PROB_EPS)
    y = Tensor(labels)
    term = autodiff.mul(y, autodiff.log(p)) + autodiff.mul(1.0 - y, autodiff.log(1.0 - p))
    return autodiff.neg(autodiff.mean(term))


def weak_loss(cls_cnn: Tensor, cls_encoder: Tensor, cls_parts: Tensor, diversity: Tensor, weights: LossWeights) -> Tensor:
    """Weighted sum of the three classification losses and the diversity
    penalty; exactly linear in each component."""
    return (
        autodiff.scale(cls_cnn, weights.alpha)
        + autodiff.scale(cls_encoder, weights.alpha1)
        + autodiff.scale(cls_parts, weights.alpha2)
        + autodiff.scale(diversity, weights.beta)
    )


def semi_weak_loss(weak: Tensor, mse: Tensor | None) -> Tensor:
    """Unweighted sum of the weak loss and the supervised heatmap MSE; with
    no location-labeled samples it IS the weak loss (same tensor)."""
    if mse is None:
        return weak
    return weak + mse


def mse_heatmap_loss(predicted: Tensor, target: np.ndarray) -> Tensor:
    """Mean over keypoints (and batch) of per-cell squared error between the
    predicted response maps and rendered target heatmaps."""
    predicted = autodiff.as_tensor(predicted)
    target = np.asarray(target, dtype=np.float64)
    if predicted.shape != target.shape:
        raise autodiff.ShapeError(f"heatmap shapes differ: {predicted.shape} vs {target.shape}")
    diff = predicted - Tensor(target)
    return autodiff.mean(autodiff.mul(diff, diff))


def render_gaussian_heatmaps(
    locations: np.ndarray,
    presence: np.ndarray,
    grid_hw: tuple[int, int],
    image_hw: tuple[int, int],
    sigma: float = 2.0,
    normalize: bool = False,
) -> np.ndarray:
    """Gaussian target maps on the prediction grid.

    ``locations`` is (..., K, 2) image-space (row, col); absent keypoints get
    an all-zero map.  ``sigma`` is in grid cells.  Default is the unit-peak
    convention; pair it with ``peak_unit_response_maps`` so predictions live
    in the same units.  ``normalize=True`` instead gives unit total mass.
    """
    locations = np.asarray(locations, dtype=np.float64)
    presence = np.asarray(presence, dtype=np.float64)
    gh, gw = grid_hw
    stride_r = image_hw[0] / gh
    stride_c = image_hw[1] / gw
    squeeze = locations.ndim == 2
    if squeeze:
        locations = locations[None]
        presence = presence[None]
    b, k = locations.shape[:2]
    rows = np.arange(gh)[:, None]
    cols = np.arange(gw)[None, :]
    maps = np.zeros((b, k, gh, gw))
    for bi in range(b):
        for ki in range(k):
            if presence[bi, ki] == 0:
                continue
            cr = (locations[bi, ki, 0] - (stride_r / 2.0 - 0.5)) / stride_r
            cc = (locations[bi, ki, 1] - (stride_c / 2.0 - 0.5)) / stride_c
            bump = np.exp(-((rows - cr) ** 2 + (cols - cc) ** 2) / (2.0 * sigma**2))
            if normalize:
                bump = bump / bump.sum()
            maps[bi, ki] = bump
    return maps[0] if squeeze else maps


def response_heatmaps(responses: Tensor, scale_offsets, scale_shapes) -> Tensor:
    """Fold the multi-scale response row into one (..., K, H1, W1) map on the
    highest-resolution grid.

    Each coarser segment spreads its cell mass evenly over the finer cells it
    covers, so the map stays a probability distribution over the grid: total
    mass equals the row's (unit) mass regardless of which scales attention
    favoured.
    """
    h1, w1 = scale_shapes[0]
    total = None
    for (hs, ws), start in zip(scale_shapes, scale_offsets):
        segment = autodiff.narrow(responses, -1, start, hs * ws)
        grid = autodiff.reshape(segment, segment.shape[:-1] + (hs, ws))
        fr, fc = h1 // hs, w1 // ws
        if fr > 1 or fc > 1:
            grid = autodiff.scale(autodiff.repeat2d(grid, fr, fc), 1.0 / (fr * fc))
        total = grid if total is None else total + grid
    return total


def peak_unit_response_maps(responses: Tensor, scale_offsets, scale_shapes, sigma: float = 2.0) -> Tensor:
    """Response mass folded onto the fine grid and converted to unit-peak
    Gaussian units: a row that reproduces the target Gaussian's shape with
    all its mass yields exactly the unit-peak map (mass * 2*pi*sigma^2)."""
    maps = response_heatmaps(responses, scale_offsets, scale_shapes)
    return autodiff.scale(maps, 2.0 * np.pi * sigma * sigma)
