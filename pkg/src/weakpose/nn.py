"""Parameter containers and the small layer zoo shared by the model parts.

Initialization is uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)] drawn from
the generator handed to each layer, so a model built from one seeded
generator is reproducible parameter-for-parameter.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import autodiff
from .autodiff import Tensor


def init_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    bound = np.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _walk(value, name: str):
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(f"{name}.")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")


class Module:
    """Base with parameter discovery over attributes, sub-modules and
    (arbitrarily nested) lists of them."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for attr, value in vars(self).items():
            yield from _walk(value, f"{prefix}{attr}")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ValueError(f"parameter name mismatch; missing={missing} unexpected={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: checkpoint {arr.shape} vs model {p.data.shape}")
            p.data[...] = arr

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}


class Linear(Module):
    """y = x @ W + b over the last axis; leading axes are flattened into one
    GEMM so stacked inputs stay a single BLAS call."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        self.weight = init_uniform(rng, (in_features, out_features), in_features)
        self.bias = init_uniform(rng, (out_features,), in_features) if bias else None
        self.in_features = in_features
        self.out_features = out_features

    def __call__(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        flat = x if x.ndim == 2 else autodiff.reshape(x, (-1, self.in_features))
        out = autodiff.matmul(flat, self.weight)
        if self.bias is not None:
            out = out + self.bias
        if x.ndim != 2:
            out = autodiff.reshape(out, lead + (self.out_features,))
        return out


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
        bias: bool = True,
    ):
        kh, kw = autodiff._pair(kernel_size)
        fan_in = kh * kw * in_channels
        self.weight = init_uniform(rng, (kh, kw, in_channels, out_channels), fan_in)
        self.bias = init_uniform(rng, (out_channels,), fan_in) if bias else None
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return autodiff.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.shift = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return autodiff.layer_norm(x, self.gain, self.shift, eps=self.eps)


class FeedForward(Module):
    """Two linear layers with a ReLU between them."""

    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.lin1 = Linear(dim, hidden, rng)
        self.lin2 = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.lin2(autodiff.relu(self.lin1(x)))
