import itertools

import numpy as np
import pytest

from gssc.errors import InvalidParameter, SizeCapExceeded
from gssc.graph import adjacency, build_graph, generate
from gssc.oracles import (
    DIRECTED,
    UNDIRECTED,
    closed_form_counts,
    count_cycles,
    count_paths,
    offdiag_rowsum,
    walk_counts,
    wl1_equivalent,
    wl1_refine,
)

from conftest import er_graphs


def brute_triangles(g):
    a = adjacency(g).toarray()
    out = np.zeros(g.n, dtype=int)
    for u, v, w in itertools.combinations(range(g.n), 3):
        if a[u, v] and a[v, w] and a[u, w]:
            out[[u, v, w]] += 1
    return out


def test_triangle_oracle_matches_brute_force():
    for g in er_graphs(10, 10, seed=1, p=0.5):
        assert np.array_equal(count_cycles(g, 3).per_node, brute_triangles(g))


def test_complete_graph_counts():
    k4 = build_graph(4, list(itertools.combinations(range(4), 2)))
    assert count_cycles(k4, 3).per_node.tolist() == [3] * 4
    assert count_cycles(k4, 4).per_node.tolist() == [3] * 4
    # simple 2-paths from each node of K4 to the other three
    assert count_paths(k4, 2).tolist() == [6] * 4


def test_convention_factor():
    rep = count_cycles(generate("cycle", n=3), 3)
    assert rep.convention == UNDIRECTED
    assert rep.as_convention(DIRECTED).per_node.tolist() == [2, 2, 2]
    assert rep.as_convention(DIRECTED).as_convention(UNDIRECTED).per_node.tolist() == [1, 1, 1]


def test_caps_and_parameters():
    with pytest.raises(InvalidParameter):
        count_cycles(generate("cycle", n=5), 7)
    with pytest.raises(SizeCapExceeded):
        count_cycles(generate("path", n=70), 3)
    with pytest.raises(SizeCapExceeded):
        walk_counts(generate("path", n=4), 9)


def test_walk_counts_exact():
    g = generate("erdos_renyi", n=9, seed=2, p=0.5)
    a = adjacency(g).toarray().astype(np.int64)
    assert np.array_equal(walk_counts(g, 5), np.linalg.matrix_power(a, 5))


def test_closed_forms_match_enumeration():
    for g in er_graphs(25, 10, seed=3, p=0.45):
        cf = closed_form_counts(g)
        assert np.array_equal(cf["C3"], 2 * count_cycles(g, 3).per_node)
        assert np.array_equal(cf["C4"], 2 * count_cycles(g, 4).per_node)
        for k in (2, 3, 4):
            assert np.array_equal(offdiag_rowsum(cf[f"P{k}"]), count_paths(g, k))


def test_single_a2_path_form_is_off_by_a2():
    g = generate("erdos_renyi", n=9, seed=8, p=0.5)
    cf = closed_form_counts(g)
    diff = offdiag_rowsum(cf["P4"] - cf["P4_literal"])
    assert np.array_equal(diff, offdiag_rowsum(cf["P2"]))


def test_wl1_two_triangles_vs_hexagon():
    tri = generate("cycle", n=3)
    two = generate("disjoint_union", graphs=[tri, tri])
    assert wl1_equivalent(two, generate("cycle", n=6))
    assert not wl1_equivalent(generate("path", n=6), generate("cycle", n=6))


def test_wl1_histogram_is_relabel_invariant():
    g = generate("erdos_renyi", n=12, seed=4, p=0.3)
    from gssc.graph import permute_graph

    assert wl1_refine(g) == wl1_refine(permute_graph(g, np.random.default_rng(0).permutation(12)))
