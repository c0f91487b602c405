"""Multi-scale context encoder: spatial position encoding driven by coarse
activation peaks, followed by per-scale self-attention stacks whose outputs
concatenate into one context memory.

Attention blocks are post-norm: layer normalization follows each residual
add.  The same block shape serves self-attention here and cross-attention in
the decoder (queries may come from a different source than keys/values).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff, nn
from .autodiff import ShapeError, Tensor


@dataclass
class ContextMemory:
    """Concatenated per-scale encoder outputs.

    ``memory`` is (..., L, C) with L the sum of flattened scale lengths;
    ``scale_offsets`` holds each scale's start index and ``scale_shapes`` the
    (H_s, W_s) extents its segment unflattens to.
    """

    memory: Tensor
    scale_offsets: tuple[int, ...]
    scale_shapes: tuple[tuple[int, int], ...]

    @property
    def length(self) -> int:
        return self.memory.shape[-2]

    def segment_lengths(self) -> tuple[int, ...]:
        return tuple(h * w for h, w in self.scale_shapes)


@lru_cache(maxsize=16)
def sinusoidal_position_grid(height: int, width: int, channels: int) -> np.ndarray:
    """Fixed 2-D sin/cos position grid (H, W, C); the fallback position term
    used when the peak-driven encoding is disabled."""
    if channels % 4 != 0:
        raise ValueError(f"sinusoidal grid needs channels divisible by 4, got {channels}")
    quarter = channels // 4
    freqs = 1.0 / (10000.0 ** (np.arange(quarter) / max(quarter, 1)))
    rows = np.arange(height)[:, None] * freqs[None, :]
    cols = np.arange(width)[:, None] * freqs[None, :]
    grid = np.zeros((height, width, channels))
    grid[:, :, 0 * quarter : 1 * quarter] = np.sin(rows)[:, None, :]
    grid[:, :, 1 * quarter : 2 * quarter] = np.cos(rows)[:, None, :]
    grid[:, :, 2 * quarter : 3 * quarter] = np.sin(cols)[None, :, :]
    grid[:, :, 3 * quarter : 4 * quarter] = np.cos(cols)[None, :, :]
    return grid


class SpatialEncoding(nn.Module):
    """Position term from the coarse location mask: the feature map gated by
    the mask acts as the positional encoding, summed back onto the features
    and passed through a learned per-channel transform."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.transform = nn.Linear(channels, channels, rng)

    def __call__(self, features: Tensor, mask: np.ndarray) -> Tensor:
        features = autodiff.as_tensor(features)
        if mask.shape != features.shape[:-1]:
            raise ShapeError(f"mask extents {mask.shape} do not match features {features.shape}")
        gated = autodiff.mul(features, Tensor(mask[..., None]))
        encoded = self.transform(gated + features)
        h, w, c = encoded.shape[-3], encoded.shape[-2], encoded.shape[-1]
        return autodiff.reshape(encoded, encoded.shape[:-3] + (h * w, c))


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention with h heads over a shared width C.

    Queries, keys and values come from bias-free linear projections; the
    concatenated head outputs pass through one output projection.  Returns
    both the projected output and the (..., h, Lq, Lk) attention weights.
    """

    def __init__(self, channels: int, heads: int, rng: np.random.Generator):
        if channels % heads != 0:
            raise ValueError(f"heads ({heads}) must divide channels ({channels})")
        self.channels = channels
        self.heads = heads
        self.head_dim = channels // heads
        self.wq = nn.Linear(channels, channels, rng, bias=False)
        self.wk = nn.Linear(channels, channels, rng, bias=False)
        self.wv = nn.Linear(channels, channels, rng, bias=False)
        self.wo = nn.Linear(channels, channels, rng, bias=False)

    def _split_heads(self, x: Tensor) -> Tensor:
        lead = x.shape[:-2]
        length = x.shape[-2]
        x = autodiff.reshape(x, lead + (length, self.heads, self.head_dim))
        return autodiff.swapaxes(x, -3, -2)  # (..., h, L, d)

    def __call__(self, queries: Tensor, context: Tensor) -> tuple[Tensor, Tensor]:
        q = self._split_heads(self.wq(queries))
        k = self._split_heads(self.wk(context))
        v = self._split_heads(self.wv(context))
        # 1/sqrt(d) folded into q: cheaper than rescaling the LxL score array
        q = autodiff.scale(q, 1.0 / np.sqrt(self.head_dim))
        scores = autodiff.matmul(q, autodiff.swapaxes(k, -1, -2))
        weights = autodiff.softmax(scores, axis=-1)
        mixed = autodiff.matmul(weights, v)  # (..., h, Lq, d)
        mixed = autodiff.swapaxes(mixed, -3, -2)
        lead = mixed.shape[:-3]
        lq = mixed.shape[-3]
        out = self.wo(autodiff.reshape(mixed, lead + (lq, self.channels)))
        return out, weights


class AttentionBlock(nn.Module):
    """Post-norm attention block: LN(x + attention), then LN(y + FFN(y)).

    With ``context=None`` the block self-attends; otherwise it cross-attends
    queries against the given context memory.
    """

    def __init__(self, channels: int, heads: int, rng: np.random.Generator, ffn_multiplier: int = 4):
        self.attention = MultiHeadAttention(channels, heads, rng)
        self.ffn = nn.FeedForward(channels, ffn_multiplier * channels, rng)
        self.norm1 = nn.LayerNorm(channels)
        self.norm2 = nn.LayerNorm(channels)

    def __call__(self, x: Tensor, context: Tensor | None = None) -> tuple[Tensor, Tensor]:
        attended, weights = self.attention(x, x if context is None else context)
        y = self.norm1(x + attended)
        out = self.norm2(y + self.ffn(y))
        return out, weights


class ContextEncoder(nn.Module):
    """Per-scale self-attention stacks over position-encoded features.

    One stack of ``depth`` blocks is shared across scales by default; set
    ``share_scales=False`` for independent per-scale stacks.
    """

    def __init__(
        self,
        channels: int,
        heads: int,
        depth: int,
        num_scales: int,
        rng: np.random.Generator,
        share_scales: bool = True,
        ffn_multiplier: int = 4,
    ):
        if depth < 1:
            raise ValueError(f"encoder depth must be >= 1, got {depth}")
        self.channels = channels
        self.share_scales = share_scales
        self.spatial_encoding = SpatialEncoding(channels, rng)
        stacks = 1 if share_scales else num_scales
        self.stacks = [
            [AttentionBlock(channels, heads, rng, ffn_multiplier) for _ in range(depth)]
            for _ in range(stacks)
        ]

    def _stack_for(self, scale_index: int) -> list[AttentionBlock]:
        return self.stacks[0] if self.share_scales else self.stacks[scale_index]

    def encode(self, levels, masks=None) -> ContextMemory:
        """Encode pyramid levels into one concatenated context memory.

        ``levels`` is the list of (..., H_s, W_s, C) feature maps to include;
        ``masks`` the matching per-scale location masks, or ``None`` to fall
        back to the fixed sinusoidal position grid (the no-peak baseline).
        """
        segments = []
        shapes = []
        for i, level in enumerate(levels):
            level = autodiff.as_tensor(level)
            h, w = level.shape[-3], level.shape[-2]
            shapes.append((h, w))
            if masks is not None:
                x = self.spatial_encoding(level, masks[i])
            else:
                pe = sinusoidal_position_grid(h, w, self.channels)
                summed = level + Tensor(pe)
                x = autodiff.reshape(summed, level.shape[:-3] + (h * w, self.channels))
            for block in self._stack_for(i):
                x, _ = block(x)
            segments.append(x)
        memory = segments[0] if len(segments) == 1 else autodiff.concat(segments, axis=-2)
        lengths = [h * w for h, w in shapes]
        offsets = tuple(int(v) for v in np.concatenate([[0], np.cumsum(lengths)[:-1]]))
        return ContextMemory(memory, offsets, tuple(shapes))
