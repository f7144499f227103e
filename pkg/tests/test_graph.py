import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gssc.errors import DuplicateEdge, FeatureShapeMismatch, IndexOutOfRange, NotABijection, SelfLoop
from gssc.graph import (
    adjacency,
    build_graph,
    generate,
    is_connected,
    normalized_laplacian,
    permutation_matrix,
    permute_graph,
)


def test_edges_are_canonical():
    g = build_graph(4, [(2, 1), (3, 0)])
    assert g.edges.tolist() == [[1, 2], [0, 3]]
    assert g.edge_set() == {(1, 2), (0, 3)}


@pytest.mark.parametrize(
    "edges, err",
    [([(0, 4)], IndexOutOfRange), ([(1, 1)], SelfLoop), ([(0, 1), (1, 0)], DuplicateEdge)],
)
def test_invalid_edges(edges, err):
    with pytest.raises(err):
        build_graph(4, edges)


def test_feature_rows_checked():
    with pytest.raises(FeatureShapeMismatch):
        build_graph(3, [(0, 1)], node_features=np.ones((2, 1)))
    with pytest.raises(FeatureShapeMismatch):
        build_graph(3, [(0, 1)], edge_features=np.ones((2, 1)))


def test_adjacency_symmetric_dense_and_sparse():
    g = generate("erdos_renyi", n=12, seed=3, p=0.4)
    a = adjacency(g).toarray()
    assert np.array_equal(a, a.T)
    assert np.array_equal(a, adjacency(g, sparse=True).toarray())
    assert a.sum() == 2 * g.num_edges


def test_normalized_laplacian_isolated_node():
    g = build_graph(3, [(0, 1)])
    lap = normalized_laplacian(g).toarray()
    assert np.allclose(lap[2], 0) and np.allclose(lap[:, 2], 0)
    assert np.allclose(lap[:2, :2], [[1, -1], [-1, 1]])


def test_laplacian_spectrum_in_range():
    g = generate("erdos_renyi", n=20, seed=2, p=0.3)
    vals = np.linalg.eigvalsh(normalized_laplacian(g).toarray())
    assert vals.min() > -1e-12 and vals.max() < 2 + 1e-12


def test_generate_is_deterministic():
    a = generate("erdos_renyi", n=20, seed=7, p=0.3)
    b = generate("erdos_renyi", n=20, seed=7, p=0.3)
    assert np.array_equal(a.edges, b.edges)


def test_generator_shapes():
    assert generate("path", n=5).num_edges == 4
    assert generate("cycle", n=6).num_edges == 6
    reg = generate("regular", n=10, seed=1, k=3)
    assert np.all(reg.degrees() == 3)
    assert generate("gnm", n=30, seed=1, m=40).num_edges == 40
    two = generate("disjoint_union", graphs=[generate("cycle", n=3)] * 2)
    assert two.n == 6 and not is_connected(two)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10_000))
def test_permutation_conjugates_adjacency(n, seed):
    g = generate("erdos_renyi", n=n, seed=seed, p=0.5)
    perm = np.random.default_rng(seed).permutation(n)
    p = permutation_matrix(perm)
    assert np.array_equal(adjacency(permute_graph(g, perm)).toarray(), p @ adjacency(g).toarray() @ p.T)


def test_permutation_must_be_bijection():
    with pytest.raises(NotABijection):
        permutation_matrix([0, 0, 1])
