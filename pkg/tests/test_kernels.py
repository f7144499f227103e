import numpy as np
import pytest

from gssc import kernels
from gssc.graph import generate

IMPLS = kernels.backends()


def test_backend_reported():
    assert kernels.BACKEND in IMPLS


@pytest.mark.skipif("cython" not in IMPLS, reason="compiled kernels not built")
@pytest.mark.parametrize("seed", range(5))
def test_compiled_matches_fallback(seed):
    py, cy = IMPLS["python"], IMPLS["cython"]
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(300, 4))
    index = rng.integers(0, 20, size=300)
    assert np.allclose(py.scatter_add_rows(values, index, 20), cy.scatter_add_rows(values, index, 20))
    g = generate("erdos_renyi", n=14, seed=seed, p=0.4)
    indptr, indices = g.csr()
    for k in (3, 4, 5, 6):
        assert np.array_equal(py.cycle_counts(indptr, indices, g.n, k), cy.cycle_counts(indptr, indices, g.n, k))
    for k in (1, 2, 3, 4):
        assert np.array_equal(py.path_counts(indptr, indices, g.n, k), cy.path_counts(indptr, indices, g.n, k))


def test_scatter_add_rows_reference():
    values = np.arange(12.0).reshape(6, 2)
    out = IMPLS["python"].scatter_add_rows(values, np.array([0, 1, 0, 2, 2, 2]), 4)
    expected = np.zeros((4, 2))
    np.add.at(expected, [0, 1, 0, 2, 2, 2], values)
    assert np.array_equal(out, expected)
