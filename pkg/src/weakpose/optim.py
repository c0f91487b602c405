"""Adam with decoupled weight decay and per-group learning rates.

The attention-side parameter group (encoder, decoder, prototypes, graph)
trains at the base rate divided by a configurable factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


@dataclass
class ParamGroup:
    params: list[tuple[str, Tensor]]
    lr: float


class Adam:
    """Standard Adam moments (beta1 0.9, beta2 0.999, eps 1e-8) plus
    decoupled weight decay applied directly to the parameter."""

    def __init__(
        self,
        groups: list[ParamGroup],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 1e-4,
    ):
        self.groups = groups
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = {}
        self._v = {}
        for group in groups:
            for name, p in group.params:
                self._m[name] = np.zeros_like(p.data)
                self._v[name] = np.zeros_like(p.data)

    def step(self) -> None:
        """Apply one update from the gradients currently on the parameters;
        parameters without a gradient are skipped."""
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1**t
        bias2 = 1.0 - self.beta2**t
        for group in self.groups:
            for name, p in group.params:
                g = p.grad
                if g is None:
                    continue
                m = self._m[name]
                v = self._v[name]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * (g * g)
                update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
                if self.weight_decay:
                    update = update + self.weight_decay * p.data
                p.data -= group.lr * update

    def zero_grad(self) -> None:
        for group in self.groups:
            for _, p in group.params:
                p.grad = None


def build_optimizer(model, lr: float, transformer_lr_divisor: float = 10.0, weight_decay: float = 1e-4) -> Adam:
    """Split the model's parameters into base and attention-side groups."""
    transformer_names = model.transformer_parameter_names()
    base, transformer = [], []
    for name, p in model.named_parameters():
        (transformer if name in transformer_names else base).append((name, p))
    groups = [ParamGroup(base, lr), ParamGroup(transformer, lr / transformer_lr_divisor)]
    return Adam(groups, weight_decay=weight_decay)
