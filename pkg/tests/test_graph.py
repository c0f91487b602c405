"""Skeleton graph construction and the relation-weighted graph convolution."""

import numpy as np
import numpy.testing as npt
import pytest

from helpers import brute_force_semgcn
from weakpose import autodiff
from weakpose.autodiff import Tensor
from weakpose.data import COCO_SKELETON
from weakpose.graph import PrototypeGenerator, SemGCNLayer, build_graph, prototype_affinity


class TestBuildGraph:
    def test_no_edges_gives_identity(self):
        graph = build_graph(3, [])
        npt.assert_array_equal(graph.adjacency, np.eye(3))

    def test_single_edge(self):
        graph = build_graph(2, [(0, 1)])
        npt.assert_array_equal(graph.adjacency, np.ones((2, 2)))

    def test_coco_skeleton_counts(self):
        graph = build_graph(COCO_SKELETON.num_keypoints, COCO_SKELETON.edges)
        a = graph.adjacency
        npt.assert_array_equal(a, a.T)
        assert np.trace(a) == 17
        assert (a.sum() - np.trace(a)) == 2 * len(COCO_SKELETON.edges) == 38

    def test_duplicate_edges_collapse(self):
        graph = build_graph(3, [(0, 1), (1, 0), (0, 1)])
        assert graph.edges == ((0, 1),)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            build_graph(3, [(0, 3)])

    def test_self_loops_ignored(self):
        graph = build_graph(3, [(1, 1)])
        npt.assert_array_equal(graph.adjacency, np.eye(3))


class TestSemGCNLayer:
    def test_single_node(self):
        layer = SemGCNLayer(4, 4, 1, np.random.default_rng(0))
        adjacency = build_graph(1, []).adjacency
        prop = layer.propagation(adjacency)
        npt.assert_allclose(prop.data, [[1.0]], atol=1e-15)
        nodes = np.random.default_rng(1).normal(size=(1, 4))
        out = layer(Tensor(nodes), adjacency)
        npt.assert_allclose(out.data, nodes @ layer.weight.data, atol=1e-12)

    def test_constant_relation_gives_uniform_averaging(self):
        layer = SemGCNLayer(3, 3, 3, np.random.default_rng(2))
        layer.relation.data[...] = 5.0  # constant over each row's support
        adjacency = build_graph(3, [(0, 1), (0, 2)]).adjacency
        prop = layer.propagation(adjacency).data
        npt.assert_allclose(prop[0], [1 / 3, 1 / 3, 1 / 3], atol=1e-12)
        npt.assert_allclose(prop[1], [0.5, 0.5, 0.0], atol=1e-12)

    def test_triangle_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        layer = SemGCNLayer(2, 2, 3, rng)
        layer.relation.data[...] = rng.normal(size=(3, 3))
        adjacency = build_graph(3, [(0, 1), (1, 2), (0, 2)]).adjacency
        nodes = rng.normal(size=(3, 2))
        out = layer(Tensor(nodes), adjacency)
        npt.assert_allclose(out.data, brute_force_semgcn(nodes, layer, adjacency), atol=1e-12)

    def test_propagation_row_stochastic_on_support(self):
        rng = np.random.default_rng(4)
        layer = SemGCNLayer(3, 3, 5, rng)
        layer.relation.data[...] = rng.normal(scale=10.0, size=(5, 5))
        adjacency = build_graph(5, [(0, 1), (1, 2), (3, 4)]).adjacency
        prop = layer.propagation(adjacency).data
        npt.assert_allclose(prop.sum(axis=1), 1.0, atol=1e-9)
        assert (prop[adjacency == 0] == 0).all()

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        layer = SemGCNLayer(3, 3, 4, rng)
        layer.relation.data[...] = rng.normal(size=(4, 4))
        adjacency = build_graph(4, [(0, 1), (2, 3), (1, 2)]).adjacency
        nodes = rng.normal(size=(4, 3))
        base = layer(Tensor(nodes), adjacency).data

        perm = np.random.default_rng(6).permutation(4)
        layer.relation.data[...] = layer.relation.data[perm][:, perm]
        permuted = layer(Tensor(nodes[perm]), adjacency[perm][:, perm]).data
        npt.assert_allclose(permuted, base[perm], atol=1e-12)

    def test_brute_force_equivalence_random_graphs(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            k = int(rng.integers(2, 6))
            d = int(rng.integers(1, 5))
            layer = SemGCNLayer(d, d, k, rng)
            layer.relation.data[...] = rng.normal(size=(k, k))
            possible = [(i, j) for i in range(k) for j in range(i + 1, k)]
            chosen = [possible[i] for i in rng.choice(len(possible), size=min(len(possible), 3), replace=False)]
            adjacency = build_graph(k, chosen).adjacency
            nodes = rng.normal(size=(k, d))
            out = layer(Tensor(nodes), adjacency)
            npt.assert_allclose(out.data, brute_force_semgcn(nodes, layer, adjacency), atol=1e-12)


class TestPrototypeGenerator:
    def test_zero_layers_is_projection_of_normalized_vectors(self):
        gen = PrototypeGenerator(6, 4, 3, 0, np.random.default_rng(8))
        graph = build_graph(3, [(0, 1)])
        vectors = np.random.default_rng(9).normal(size=(3, 6))
        out = gen(Tensor(vectors), graph)
        rms = np.sqrt((vectors**2).mean(axis=-1, keepdims=True))
        npt.assert_allclose(out.data, (vectors / (rms + 1e-8)) @ gen.project.weight.data, atol=1e-12)

    def test_normalized_rows_have_unit_rms(self):
        gen = PrototypeGenerator(6, 4, 3, 0, np.random.default_rng(8))
        vectors = Tensor(np.random.default_rng(10).normal(scale=1e4, size=(3, 6)))
        unit = gen.normalize(vectors).data
        npt.assert_allclose(np.sqrt((unit**2).mean(axis=-1)), 1.0, rtol=1e-6)

    def test_zero_vectors_give_zero_prototypes(self):
        gen = PrototypeGenerator(6, 4, 3, 2, np.random.default_rng(10))
        graph = build_graph(3, [(0, 1), (1, 2)])
        out = gen(Tensor(np.zeros((3, 6))), graph)
        npt.assert_array_equal(out.data, 0.0)

    def test_gradients_flow_back_to_keypoint_features(self):
        from weakpose.cam import CamHead
        from weakpose.gradcheck import gradcheck

        rng = np.random.default_rng(11)
        head = CamHead(4, 3, 4, rng)
        gen = PrototypeGenerator(4, 4, 3, 2, rng)
        graph = build_graph(3, [(0, 1), (1, 2)])
        features = Tensor(rng.normal(size=(3, 3, 4)), requires_grad=True)
        probe = Tensor(rng.normal(size=(3, 4)))

        def f():
            x_kpt = head.keypoint_channels(features)
            x_vec = head.to_vector_channels(features)
            vectors = head.keypoint_vectors(x_kpt, x_vec).vectors
            return autodiff.sum_(autodiff.mul(gen(vectors, graph), probe))

        report = gradcheck(f, {"features": features}, step=1e-3)
        assert report.max_rel_error < 1e-3


class TestPrototypeAffinity:
    def test_orthonormal_gives_identity(self):
        npt.assert_allclose(prototype_affinity(np.eye(4)), np.eye(4), atol=1e-12)

    def test_duplicate_rows_equal(self):
        p = np.random.default_rng(12).normal(size=(4, 6))
        p[2] = p[0]
        affinity = prototype_affinity(p)
        npt.assert_allclose(affinity[0], affinity[2], atol=1e-12)
        assert affinity[0, 2] == pytest.approx(1.0)

    def test_range(self):
        p = np.random.default_rng(13).normal(size=(5, 7))
        affinity = prototype_affinity(p)
        assert (affinity <= 1.0 + 1e-12).all() and (affinity >= -1.0 - 1e-12).all()
