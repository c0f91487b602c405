"""Skeleton graph and the relation-weighted graph convolution that turns
per-category keypoint vectors into pose prototypes for the decoder.

Each graph layer owns a learnable relation matrix that is masked by the
skeleton adjacency and softmax-normalized over each row's support, so a
node mixes only with itself and its kinematic neighbours, with learned
mixing proportions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff, nn
from .autodiff import Tensor


@dataclass
class SkeletonGraph:
    """Keypoint adjacency: symmetric, unit diagonal, 1 where a limb connects
    two keypoints."""

    num_keypoints: int
    edges: tuple[tuple[int, int], ...]
    adjacency: np.ndarray


def build_graph(num_keypoints: int, edges: Sequence[Sequence[int]]) -> SkeletonGraph:
    """Adjacency from a limb list; duplicate edges collapse silently, indices
    out of range raise."""
    adjacency = np.eye(num_keypoints, dtype=np.float64)
    unique = set()
    for edge in edges:
        i, j = int(edge[0]), int(edge[1])
        if not (0 <= i < num_keypoints and 0 <= j < num_keypoints):
            raise ValueError(f"edge ({i}, {j}) out of range for {num_keypoints} keypoints")
        if i == j:
            continue
        unique.add((min(i, j), max(i, j)))
    for i, j in unique:
        adjacency[i, j] = 1.0
        adjacency[j, i] = 1.0
    return SkeletonGraph(num_keypoints, tuple(sorted(unique)), adjacency)


class SemGCNLayer(nn.Module):
    """One relation-weighted graph convolution.

    ``relation`` starts at all ones, which the masked softmax turns into
    uniform averaging over each node's neighbourhood; training then learns
    non-uniform mixing.  The shared linear transform carries no bias so a
    zero node field stays zero.
    """

    def __init__(self, in_dim: int, out_dim: int, num_keypoints: int, rng: np.random.Generator):
        self.relation = Tensor(np.ones((num_keypoints, num_keypoints)), requires_grad=True)
        self.weight = nn.init_uniform(rng, (in_dim, out_dim), in_dim)

    def propagation(self, adjacency: np.ndarray) -> Tensor:
        """Row-stochastic mixing matrix: softmax of the relation over each
        row's adjacency support, exactly zero off-support."""
        log_mask = np.where(adjacency > 0, 0.0, -np.inf)
        return autodiff.softmax(autodiff.add(self.relation, Tensor(log_mask)), axis=-1)

    def __call__(self, nodes: Tensor, adjacency: np.ndarray) -> Tensor:
        mixed = autodiff.matmul(self.propagation(adjacency), nodes)
        return autodiff.matmul(mixed, self.weight)


class PrototypeGenerator(nn.Module):
    """RMS-normalize the keypoint vectors, project them to the model width
    and refine them through a stack of graph layers; relu between layers,
    none after the last.

    The input normalization matters: the pooled keypoint vectors are sums
    over all pixels and reach magnitudes of 1e4, which would saturate the
    first cross-attention softmax at initialization and freeze its gradient.
    A zero vector stays zero (epsilon-guarded denominator, no biases
    anywhere in this stack).
    """

    def __init__(
        self,
        vector_dim: int,
        out_dim: int,
        num_keypoints: int,
        num_layers: int,
        rng: np.random.Generator,
    ):
        self.project = nn.Linear(vector_dim, out_dim, rng, bias=False)
        self.layers = [SemGCNLayer(out_dim, out_dim, num_keypoints, rng) for _ in range(num_layers)]

    def normalize(self, vectors: Tensor) -> Tensor:
        squares = autodiff.mean(autodiff.mul(vectors, vectors), axis=-1, keepdims=True)
        return autodiff.div(vectors, autodiff.add(autodiff.sqrt(squares), 1e-8))

    def __call__(self, vectors: Tensor, graph: SkeletonGraph) -> Tensor:
        x = self.project(self.normalize(vectors))
        for i, layer in enumerate(self.layers):
            x = layer(x, graph.adjacency)
            if i < len(self.layers) - 1:
                x = autodiff.relu(x)
        return x


def prototype_affinity(prototypes: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Cosine inner-product matrix of prototype rows (the learned-relation
    diagnostic): unit-normalize each row, then all pairwise inner products."""
    norms = np.linalg.norm(prototypes, axis=-1, keepdims=True)
    unit = prototypes / np.maximum(norms, eps)
    return unit @ unit.T
