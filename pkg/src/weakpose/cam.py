"""Classifier head over the 1/4-scale features: per-keypoint presence
probabilities, class activation maps, category keypoint vectors and the
coarse peak locations that seed the attention stages.

The activation map for category c is relu of the per-pixel dot product of
the keypoint-channel features with the classifier's own weight column, so
high values mark the image evidence for that keypoint being present.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff, nn
from .autodiff import ShapeError, Tensor


@dataclass
class ClassActivationMaps:
    """(..., H, W, K) nonnegative per-category activation maps."""

    maps: Tensor


@dataclass
class KeypointVectors:
    """(..., K, D) one pooled feature vector per keypoint category."""

    vectors: Tensor


@dataclass
class CoarseLocations:
    """Per-category activation peaks on the 1/4 grid plus the binary location
    masks re-derived at every pyramid scale.

    ``peaks`` is (..., K, 2) integer (row, col); ``masks`` holds one
    (..., H_s, W_s) float array per pyramid scale.
    """

    peaks: np.ndarray
    masks: list[np.ndarray]


class CamHead(nn.Module):
    def __init__(self, channels: int, num_keypoints: int, vector_dim: int, rng: np.random.Generator):
        self.num_keypoints = num_keypoints
        # 1x1 convolutions, realized as channel-axis linear maps.
        self.to_keypoint_channels = nn.Linear(channels, num_keypoints, rng)
        self.to_vector_channels = nn.Linear(channels, vector_dim, rng)
        self.classifier = nn.Linear(num_keypoints, num_keypoints, rng)

    def keypoint_channels(self, features: Tensor) -> Tensor:
        """Project backbone features (..., H, W, C) to one channel per keypoint."""
        return self.to_keypoint_channels(features)

    def classify(self, keypoint_features: Tensor) -> Tensor:
        """Presence probability per keypoint: GAP, linear, per-class sigmoid.

        Labels are independent per keypoint (several parts can be present at
        once), hence sigmoid rather than a competing softmax.
        """
        if keypoint_features.shape[-1] != self.num_keypoints:
            raise ShapeError(
                f"expected {self.num_keypoints} keypoint channels, got {keypoint_features.shape[-1]}"
            )
        pooled = autodiff.global_avg_pool(keypoint_features)
        return autodiff.sigmoid(self.classifier(pooled))

    def activation_maps(self, keypoint_features: Tensor) -> ClassActivationMaps:
        """Per-category maps m_c = relu(sum_k w_ck * x_k) using the classifier's
        own weight matrix."""
        return compute_cam(keypoint_features, self.classifier.weight)

    def keypoint_vectors(self, keypoint_features: Tensor, vector_features: Tensor) -> KeypointVectors:
        """Per-category vectors f_c = sum over pixels of x'_c(i,j) * v(i,j,:)."""
        if keypoint_features.shape[-3:-1] != vector_features.shape[-3:-1]:
            raise ShapeError(
                f"spatial extents differ: {keypoint_features.shape} vs {vector_features.shape}"
            )
        h, w = keypoint_features.shape[-3], keypoint_features.shape[-2]
        k = keypoint_features.shape[-1]
        d = vector_features.shape[-1]
        lead = keypoint_features.shape[:-3]
        xk = autodiff.reshape(keypoint_features, lead + (h * w, k))
        xv = autodiff.reshape(vector_features, lead + (h * w, d))
        vectors = autodiff.matmul(autodiff.swapaxes(xk, -1, -2), xv)
        return KeypointVectors(vectors)


def compute_cam(keypoint_features: Tensor, fc_weight: Tensor) -> ClassActivationMaps:
    """relu((..., H, W, K) @ (K, K)) with one weight column per category."""
    keypoint_features = autodiff.as_tensor(keypoint_features)
    fc_weight = autodiff.as_tensor(fc_weight)
    if fc_weight.shape[0] != keypoint_features.shape[-1]:
        raise ShapeError(
            f"weight rows {fc_weight.shape} do not match feature channels {keypoint_features.shape}"
        )
    return ClassActivationMaps(autodiff.relu(autodiff.matmul(keypoint_features, fc_weight)))


def _dilate_peak(mask: np.ndarray, row: int, col: int) -> None:
    h, w = mask.shape
    mask[max(row - 1, 0) : min(row + 2, h), max(col - 1, 0) : min(col + 2, w)] = 1.0


def coarse_locations(
    cams: np.ndarray,
    scale_divisors: tuple[int, ...] = (1, 2, 4),
    mask_mode: str = "binary",
    gaussian_sigma: float = 1.0,
) -> CoarseLocations:
    """Argmax peaks per activation channel plus location masks per scale.

    ``cams`` is (H, W, K) or (B, H, W, K) raw activation data.  Ties resolve
    to the smallest row-major index.  Each peak is re-derived at every scale
    by floor-dividing its coordinates, then dilated by one cell so the mask
    survives downscaling.  ``mask_mode="gaussian"`` renders a soft bump of
    the given sigma instead of the binary 3x3 patch.
    """
    if mask_mode not in ("binary", "gaussian"):
        raise ValueError(f"unknown mask_mode {mask_mode!r}")
    squeeze = cams.ndim == 3
    batch = cams[None] if squeeze else cams
    b, h, w, k = batch.shape
    peaks = np.zeros((b, k, 2), dtype=np.int64)
    flat = batch.reshape(b, h * w, k)
    idx = flat.argmax(axis=1)  # first maximum in row-major order
    peaks[:, :, 0] = idx // w
    peaks[:, :, 1] = idx % w

    masks = []
    for divisor in scale_divisors:
        hs, ws = h // divisor, w // divisor
        mask = np.zeros((b, hs, ws), dtype=np.float64)
        for bi in range(b):
            for ki in range(k):
                r = int(peaks[bi, ki, 0]) // divisor
                c = int(peaks[bi, ki, 1]) // divisor
                if mask_mode == "binary":
                    _dilate_peak(mask[bi], r, c)
                else:
                    rows = np.arange(hs)[:, None]
                    cols = np.arange(ws)[None, :]
                    bump = np.exp(-((rows - r) ** 2 + (cols - c) ** 2) / (2.0 * gaussian_sigma**2))
                    np.maximum(mask[bi], bump, out=mask[bi])
        masks.append(mask[0] if squeeze else mask)
    return CoarseLocations(peaks[0] if squeeze else peaks, masks)
