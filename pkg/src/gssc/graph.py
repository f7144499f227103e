"""Undirected simple graphs, seeded generators and the matrices built from them.

Edges are stored canonically as ``(u, v)`` with ``u < v``; every dense or
sparse matrix materialization writes both triangles from that single list.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import (
    DuplicateEdge,
    FeatureShapeMismatch,
    IndexOutOfRange,
    InvalidParameter,
    NotABijection,
    SelfLoop,
)

__all__ = [
    "Graph",
    "SymMatrix",
    "build_graph",
    "adjacency",
    "degree_matrix",
    "normalized_laplacian",
    "permute_graph",
    "permutation_matrix",
    "generate",
    "is_connected",
]


@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    edges: np.ndarray  # (E, 2) int64, u < v
    node_features: np.ndarray | None = None
    edge_features: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.edges.ravel(), 1)
        return deg

    def directed_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Both orientations of every edge: ``(src, dst)`` of length 2|E|."""
        u, v = self.edges[:, 0], self.edges[:, 1]
        return np.concatenate([u, v]), np.concatenate([v, u])

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted CSR neighbour lists ``(indptr, indices)``."""
        a = adjacency(self, sparse=True).storage.tocsr()
        a.sort_indices()
        return a.indptr.astype(np.int64), a.indices.astype(np.int64)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, edges={self.num_edges})"


@dataclass(frozen=True, eq=False)
class SymMatrix:
    n: int
    storage: Any  # ndarray or scipy sparse matrix
    kind: str

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.storage)

    def toarray(self) -> np.ndarray:
        if self.is_sparse:
            return self.storage.toarray()
        return np.asarray(self.storage)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.storage @ x


def build_graph(n, edges, node_features=None, edge_features=None, meta=None) -> Graph:
    n = int(n)
    if n < 1:
        raise InvalidParameter(f"node count must be positive, got {n}")
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    if arr.size == 0:
        arr = np.zeros((0, 2), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidParameter(f"edges must be a list of pairs, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        bad = arr[(arr < 0).any(axis=1) | (arr >= n).any(axis=1)][0]
        raise IndexOutOfRange(f"edge {tuple(bad.tolist())} has an endpoint outside [0, {n})")
    loops = arr[:, 0] == arr[:, 1]
    if loops.any():
        raise SelfLoop(f"self-loop at node {int(arr[loops][0, 0])}")
    canon = np.sort(arr, axis=1)
    if canon.shape[0]:
        keys = canon[:, 0] * n + canon[:, 1]
        uniq, counts = np.unique(keys, return_counts=True)
        if (counts > 1).any():
            k = int(uniq[counts > 1][0])
            raise DuplicateEdge(f"edge ({k // n}, {k % n}) appears more than once")
    if node_features is not None:
        node_features = np.asarray(node_features, dtype=np.float64)
        if node_features.ndim == 1:
            node_features = node_features[:, None]
        if node_features.shape[0] != n:
            raise FeatureShapeMismatch(
                f"node_features has {node_features.shape[0]} rows for {n} nodes"
            )
    if edge_features is not None:
        edge_features = np.asarray(edge_features, dtype=np.float64)
        if edge_features.ndim == 1:
            edge_features = edge_features[:, None]
        if edge_features.shape[0] != canon.shape[0]:
            raise FeatureShapeMismatch(
                f"edge_features has {edge_features.shape[0]} rows for {canon.shape[0]} edges"
            )
    canon.setflags(write=False)
    return Graph(n, canon, node_features, edge_features, dict(meta or {}))


def adjacency(g: Graph, sparse: bool = False) -> SymMatrix:
    u, v = g.directed_edges()
    data = np.ones(u.shape[0], dtype=np.float64)
    a = sp.coo_matrix((data, (u, v)), shape=(g.n, g.n)).tocsr()
    return SymMatrix(g.n, a if sparse else a.toarray(), "adjacency")


def degree_matrix(g: Graph) -> SymMatrix:
    return SymMatrix(g.n, np.diag(g.degrees().astype(np.float64)), "degree")


def _inv_sqrt_degree(g: Graph) -> np.ndarray:
    deg = g.degrees().astype(np.float64)
    out = np.zeros_like(deg)
    nz = deg > 0
    out[nz] = 1.0 / np.sqrt(deg[nz])
    return out


def normalized_laplacian(g: Graph, sparse: bool = False) -> SymMatrix:
    """``I - D^{-1/2} A D^{-1/2}``; isolated nodes get an all-zero row and column."""
    s = _inv_sqrt_degree(g)
    u, v = g.directed_edges()
    off = -(s[u] * s[v])
    diag_idx = np.arange(g.n)
    diag = (s > 0).astype(np.float64)
    rows = np.concatenate([u, diag_idx])
    cols = np.concatenate([v, diag_idx])
    data = np.concatenate([off, diag])
    lap = sp.coo_matrix((data, (rows, cols)), shape=(g.n, g.n)).tocsr()
    return SymMatrix(g.n, lap if sparse else lap.toarray(), "normalized_laplacian")


def _check_perm(perm, n) -> np.ndarray:
    p = np.asarray(perm, dtype=np.int64)
    if p.shape != (n,) or not np.array_equal(np.sort(p), np.arange(n)):
        raise NotABijection(f"{perm!r} is not a permutation of range({n})")
    return p


def permutation_matrix(perm) -> np.ndarray:
    """``P`` with ``P[perm[i], i] = 1``, so relabeled matrices are ``P M P^T``."""
    p = _check_perm(perm, len(perm))
    mat = np.zeros((p.size, p.size))
    mat[p, np.arange(p.size)] = 1.0
    return mat


def permute_graph(g: Graph, perm) -> Graph:
    """Relabel node ``i`` as ``perm[i]``; features follow their nodes and edges."""
    p = _check_perm(perm, g.n)
    edges = np.sort(p[g.edges], axis=1) if g.num_edges else g.edges.copy()
    nf = None
    if g.node_features is not None:
        nf = np.empty_like(g.node_features)
        nf[p] = g.node_features
    ef = None if g.edge_features is None else g.edge_features.copy()
    return build_graph(g.n, edges, nf, ef, g.meta)


def is_connected(g: Graph) -> bool:
    ncomp, _ = connected_components(adjacency(g, sparse=True).storage, directed=False)
    return ncomp == 1


def _erdos_renyi(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    # one uniform draw per pair (u, v), u < v, in row-major order
    iu, iv = np.triu_indices(n, k=1)
    keep = rng.random(iu.shape[0]) < p
    return np.stack([iu[keep], iv[keep]], axis=1)


def _random_regular(n: int, k: int, rng: np.random.Generator, max_tries: int = 2000) -> np.ndarray:
    # pairing model with whole-configuration rejection
    if k == 0:
        return np.zeros((0, 2), dtype=np.int64)
    stubs = np.repeat(np.arange(n), k)
    for _ in range(max_tries):
        perm = rng.permutation(stubs).reshape(-1, 2)
        if (perm[:, 0] == perm[:, 1]).any():
            continue
        canon = np.sort(perm, axis=1)
        if np.unique(canon[:, 0] * n + canon[:, 1]).size != canon.shape[0]:
            continue
        return canon
    raise InvalidParameter(f"could not draw a simple {k}-regular graph on {n} nodes")


def _gnm(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    total = n * (n - 1) // 2
    if m > total:
        raise InvalidParameter(f"{m} edges requested but only {total} pairs exist")
    chosen = np.zeros(0, dtype=np.int64)
    while chosen.size < m:
        need = m - chosen.size
        u = rng.integers(0, n, size=int(need * 1.1) + 16)
        v = rng.integers(0, n, size=u.size)
        ok = u != v
        lo, hi = np.minimum(u[ok], v[ok]), np.maximum(u[ok], v[ok])
        keys = np.concatenate([chosen, lo * n + hi])
        _, first = np.unique(keys, return_index=True)
        chosen = keys[np.sort(first)][:m]
    return np.stack([chosen // n, chosen % n], axis=1)


def generate(kind: str, n: int = 0, seed: int = 0, **params) -> Graph:
    """Deterministic graph generator.

    ``kind`` is one of ``erdos_renyi`` (``p``), ``regular`` (``k``), ``gnm``
    (``m`` edges), ``path``, ``cycle`` or ``disjoint_union`` (``graphs``).
    Random kinds draw from ``numpy.random.default_rng(seed)`` (PCG64), so the
    result is a pure function of ``(kind, n, params, seed)``.
    """
    rng = np.random.default_rng(seed)
    n = int(n)
    if kind == "disjoint_union":
        parts: Sequence[Graph] = params.get("graphs") or []
        if not parts:
            raise InvalidParameter("disjoint_union needs a non-empty 'graphs' list")
        offset, chunks = 0, []
        for part in parts:
            chunks.append(part.edges + offset)
            offset += part.n
        edges = np.concatenate(chunks) if chunks else np.zeros((0, 2), dtype=np.int64)
        n = offset
        meta_params: dict[str, Any] = {"parts": [part.n for part in parts]}
    else:
        if n < 1:
            raise InvalidParameter(f"n must be positive, got {n}")
        meta_params = dict(params)
        if kind == "erdos_renyi":
            p = float(params.get("p", -1))
            if not 0.0 <= p <= 1.0:
                raise InvalidParameter(f"erdos_renyi needs 0 <= p <= 1, got {p}")
            edges = _erdos_renyi(n, p, rng)
        elif kind == "regular":
            k = int(params.get("k", -1))
            if k < 0 or k >= n or (n * k) % 2:
                raise InvalidParameter(f"regular needs 0 <= k < n and n*k even (n={n}, k={k})")
            edges = _random_regular(n, k, rng)
        elif kind == "gnm":
            m = int(params.get("m", -1))
            if m < 0:
                raise InvalidParameter(f"gnm needs m >= 0, got {m}")
            edges = _gnm(n, m, rng)
        elif kind == "path":
            edges = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
        elif kind == "cycle":
            if n < 3:
                raise InvalidParameter(f"cycle needs n >= 3, got {n}")
            idx = np.arange(n)
            edges = np.sort(np.stack([idx, (idx + 1) % n], axis=1), axis=1)
        else:
            raise InvalidParameter(f"unknown generator kind {kind!r}")
    g = build_graph(n, edges)
    meta = {"kind": kind, "seed": int(seed), "params": meta_params, "connected": is_connected(g)}
    return build_graph(n, g.edges, meta=meta)

