import numpy as np
import pytest

from gssc.counting import TARGETS, counting_config, counting_forward
from gssc.errors import InvalidParameter, PartialBasis, SelectionNotConfigured
from gssc.graph import adjacency, generate, normalized_laplacian
from gssc.oracles import closed_form_counts, count_cycles, count_paths, offdiag_rowsum
from gssc.spectral import eig_full, pad_basis

from conftest import er_graphs


@pytest.mark.parametrize("target", TARGETS)
def test_constructed_stacks_match_closed_forms(target):
    for g in er_graphs(12, 12, seed=11, p=0.45):
        cf = closed_form_counts(g)
        ref = cf[target] if target in ("C3", "C4") else offdiag_rowsum(cf[target])
        out = counting_forward(counting_config(target), eig_full(adjacency(g)))
        assert np.abs(out - ref).max() < 1e-6


def test_constructed_stacks_count_subgraphs():
    g = generate("erdos_renyi", n=10, seed=5, p=0.5)
    b = eig_full(adjacency(g))
    assert np.allclose(counting_forward(counting_config("C3"), b) / 2, count_cycles(g, 3).per_node)
    assert np.allclose(counting_forward(counting_config("C4"), b) / 2, count_cycles(g, 4).per_node)
    assert np.allclose(counting_forward(counting_config("P4"), b), count_paths(g, 4))


def test_degree_from_two_channel_kernel():
    # kernel 1^T diag(lambda) 1 via channels (lambda, 1): row sums of A
    g = generate("erdos_renyi", n=9, seed=2, p=0.4)
    b = eig_full(adjacency(g))
    v = b.eigenvectors
    deg = (v * b.eigenvalues) @ (v.T @ np.ones(9))
    assert np.allclose(deg, g.degrees())


def test_hadamard_targets_need_selection():
    for t in ("C4", "P4"):
        with pytest.raises(SelectionNotConfigured):
            counting_config(t, selective=False)
    assert counting_config("C3", selective=False).target == "C3"


def test_unknown_target():
    with pytest.raises(InvalidParameter):
        counting_config("C5")


def test_partial_or_wrong_basis_rejected():
    g = generate("cycle", n=6)
    with pytest.raises(PartialBasis):
        counting_forward(counting_config("C3"), pad_basis(eig_full(adjacency(g)), 4))
    with pytest.raises(PartialBasis):
        counting_forward(counting_config("C3"), eig_full(normalized_laplacian(g)))
