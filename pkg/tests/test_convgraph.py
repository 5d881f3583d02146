import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.csgraph import connected_components

from mmdfn import convgraph
from mmdfn.convgraph import build_graph, edge_weight, expected_edge_count, renormalize


def _nodes(rng, n, d=4, mods="avt"):
    return {m: rng.standard_normal((n, d)) for m in mods}


def _enumerated_edges(n, intra, inter):
    """Brute-force pair enumeration over (utterance, modality) nodes."""
    nodes = [(i, m) for m in range(3) for i in range(n)]
    count = 0
    for (i, m), (j, k) in itertools.combinations(nodes, 2):
        count += (intra and m == k) or (inter and i == j and m != k)
    return count


class TestEdgeWeight:
    def test_identical(self):
        assert edge_weight([1.0, 2.0], [1.0, 2.0]) == 1.0

    def test_orthogonal(self):
        assert edge_weight([1.0, 0.0], [0.0, 3.0]) == 0.5

    def test_antipodal(self):
        assert edge_weight([1.0, -2.0], [-1.0, 2.0]) == 0.0

    def test_degenerate_vector(self):
        assert edge_weight([0.0, 0.0], [1.0, 1.0]) == 0.5

    def test_drift_is_clamped(self):
        v = np.array([0.1, 0.2, 0.3]) * 1e8
        assert edge_weight(v, v * (1 + 1e-16)) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            edge_weight([1.0], [1.0, 2.0])


class TestBuildGraph:
    @pytest.mark.parametrize("n", range(1, 21))
    @pytest.mark.parametrize("intra,inter", [(True, True), (True, False), (False, True)])
    def test_edge_count(self, rng, n, intra, inter):
        g = build_graph(None, _nodes(rng, n), intra, inter)
        assert g.n_edges == _enumerated_edges(n, intra, inter) == expected_edge_count(n, 3, intra, inter)
        assert g.n_nodes == 3 * n

    def test_four_utterances(self, rng):
        assert build_graph(None, _nodes(rng, 4)).n_edges == 30

    def test_single_utterance(self, rng):
        g = build_graph(None, _nodes(rng, 1))
        assert g.n_edges == 3
        assert all(g.node_index[(0, m)] != g.node_index[(0, k)] for m, k in [("a", "v"), ("v", "t")])

    def test_intra_only_components(self, rng):
        g = build_graph(None, _nodes(rng, 4), inter=False)
        count, labels = connected_components(g.mask, directed=False)
        assert count == 3
        assert sorted(np.bincount(labels).tolist()) == [4, 4, 4]
        for comp in range(3):
            members = np.flatnonzero(labels == comp)
            sub = g.mask[np.ix_(members, members)]
            assert sub.sum() == 4 * 3  # complete

    def test_weights_and_symmetry(self, rng):
        g = build_graph(None, _nodes(rng, 6))
        a = g.adjacency
        assert np.array_equal(a, a.T)
        assert np.all((a >= 0) & (a <= 1))
        assert np.all(np.diag(a) == 0)
        for i, j, w in g.edges():
            x = g.features.data
            assert abs(w - edge_weight(x[i], x[j])) < 1e-12

    def test_node_layout(self, rng):
        nodes = _nodes(rng, 3)
        g = build_graph(None, nodes)
        for (i, m), k in g.node_index.items():
            np.testing.assert_array_equal(g.features.data[k], nodes[m][i])

    def test_edgeless_warning(self, rng):
        with pytest.warns(convgraph.EdgelessGraphWarning):
            g = build_graph(None, _nodes(rng, 3), intra=False, inter=False, fusion_layers=2)
        np.testing.assert_array_equal(g.propagation, np.eye(9))

    def test_dump(self, rng, tmp_path):
        g = build_graph(None, _nodes(rng, 2))
        path = tmp_path / "edges.txt"
        g.dump_edges(path)
        lines = path.read_text().splitlines()
        assert len(lines) == g.n_edges
        i, j, w = lines[0].split()
        assert float(w) == g.adjacency[int(i), int(j)]


class TestRenormalize:
    def test_edgeless(self):
        np.testing.assert_array_equal(renormalize(np.zeros((4, 4))), np.eye(4))

    def test_two_nodes(self):
        np.testing.assert_allclose(renormalize(np.array([[0.0, 1.0], [1.0, 0.0]])),
                                   [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)

    def test_isolated_node_row(self, rng):
        a = rng.uniform(size=(5, 5))
        a = (a + a.T) / 2
        np.fill_diagonal(a, 0)
        a[3, :] = a[:, 3] = 0
        p = renormalize(a)
        np.testing.assert_array_equal(p[3], np.eye(5)[3])


def power_iteration_radius(m, iters=2000, seed=0):
    v = np.random.default_rng(seed).standard_normal(m.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = m @ v
        lam = np.linalg.norm(w) / np.linalg.norm(v)
        v = w / np.linalg.norm(w)
    return lam


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**31 - 1), st.booleans(), st.booleans())
def test_propagation_spectrum(n, seed, intra, inter):
    rng = np.random.default_rng(seed)
    g = build_graph(None, _nodes(rng, n), intra, inter)
    p = g.propagation
    assert np.array_equal(p, p.T)
    assert power_iteration_radius(p) <= 1 + 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
def test_utterance_permutation_conjugates(n, seed):
    rng = np.random.default_rng(seed)
    nodes = _nodes(rng, n)
    perm = rng.permutation(n)
    permuted = {m: x[perm] for m, x in nodes.items()}
    p, q = build_graph(None, nodes).propagation, build_graph(None, permuted).propagation
    node_perm = np.concatenate([b * n + perm for b in range(3)])
    np.testing.assert_allclose(q, p[np.ix_(node_perm, node_perm)], rtol=0, atol=1e-14)
