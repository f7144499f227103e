"""Exact ground truth: enumeration counts, walk counts, adjacency-polynomial
counting formulas and a 1-WL colour refinement certifier.

Two cycle conventions coexist:

* ``undirected_simple``: each simple cycle counted once per node on it
  (the dataset label convention);
* ``directed_closed_walk_formula``: the adjacency-polynomial value, which
  traverses every cycle in both directions and is therefore twice as large.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidParameter, SizeCapExceeded
from .graph import Graph, adjacency

__all__ = [
    "CountReport",
    "count_cycles",
    "count_paths",
    "walk_counts",
    "closed_form_counts",
    "offdiag_rowsum",
    "wl1_refine",
    "wl1_equivalent",
]

UNDIRECTED = "undirected_simple"
DIRECTED = "directed_closed_walk_formula"

_CYCLE_CAPS = {3: 64, 4: 64, 5: 64, 6: 32}
_PATH_CAP = 64


@dataclass(frozen=True)
class CountReport:
    per_node: np.ndarray
    convention: str
    m: int

    def as_convention(self, convention: str) -> "CountReport":
        """Convert between the undirected and closed-walk conventions (factor 2)."""
        if convention == self.convention:
            return self
        if convention == DIRECTED:
            return CountReport(self.per_node * 2, DIRECTED, self.m)
        if self.per_node.size and (self.per_node % 2).any():
            raise InvalidParameter("closed-walk counts must be even to halve")
        return CountReport(self.per_node // 2, UNDIRECTED, self.m)


def _int_adjacency(g: Graph) -> np.ndarray:
    return adjacency(g).toarray().astype(np.int64)


def count_cycles(g: Graph, m: int, cap: int | None = None) -> CountReport:
    if m not in _CYCLE_CAPS:
        raise InvalidParameter(f"cycle length must be one of 3..6, got {m}")
    limit = _CYCLE_CAPS[m] if cap is None else cap
    if g.n > limit:
        raise SizeCapExceeded(f"cycle enumeration capped at n={limit} for m={m}, got n={g.n}")
    indptr, indices = g.csr()
    return CountReport(kernels.cycle_counts(indptr, indices, g.n, m), UNDIRECTED, m)


def count_paths(g: Graph, m: int, cap: int | None = None) -> np.ndarray:
    if m not in (1, 2, 3, 4):
        raise InvalidParameter(f"path length must be 1..4, got {m}")
    limit = _PATH_CAP if cap is None else cap
    if g.n > limit:
        raise SizeCapExceeded(f"path enumeration capped at n={limit}, got n={g.n}")
    indptr, indices = g.csr()
    return kernels.path_counts(indptr, indices, g.n, m)


def walk_counts(g: Graph, k: int, max_k: int = 8, max_n: int = 128) -> np.ndarray:
    """Exact ``A^k`` in int64.

    ``max_k``/``max_n`` are the default caps; callers that know their walk
    counts stay small (paths, cycles) may raise them.  Overflow is checked
    against the bound ``max_degree^k``.
    """
    if k < 0 or k > max_k or g.n > max_n:
        raise SizeCapExceeded(f"walk_counts capped at k<={max_k}, n<={max_n}; got k={k}, n={g.n}")
    a = _int_adjacency(g)
    max_deg = int(a.sum(axis=1).max()) if g.n else 0
    if max_deg > 1 and k * np.log2(max_deg) + np.log2(max(g.n, 1)) >= 62:
        raise SizeCapExceeded(f"walk counts of length {k} may overflow int64")
    out = np.eye(g.n, dtype=np.int64)
    for _ in range(k):
        out = out @ a
    return out


def offdiag_rowsum(mat: np.ndarray) -> np.ndarray:
    """``sum_{v != u} M[u, v]`` for each row ``u``."""
    return mat.sum(axis=1) - np.diag(mat)


def closed_form_counts(g: Graph) -> dict[str, np.ndarray]:
    """Adjacency polynomials for 2/3/4-paths and 3/4-cycles, in exact int64.

    Cycle entries (``C3``, ``C4``) are per-node vectors in the closed-walk
    convention.  Path entries (``P2``, ``P3``, ``P4``) are n x n matrices whose
    off-diagonal part counts simple paths from ``u`` to ``v``.

    ``P4_literal`` is the 4-path polynomial with a single ``A^2`` term.  For
    ``u != v`` that form misses the walks ``u-a-u-a-v`` and ``u-a-v-a-v``
    (both of which equal ``A^2[u, v]``) when undoing the pairwise
    inclusion-exclusion, so ``P4`` carries ``2 A^2``; the literal form is kept
    for comparison and differs by exactly ``A^2`` off the diagonal.
    """
    if g.n > 128:
        raise SizeCapExceeded(f"closed-form counts capped at n=128, got n={g.n}")
    a = _int_adjacency(g)
    a2 = a @ a
    a3 = a2 @ a
    a4 = a3 @ a
    d2 = np.diag(np.diag(a2))
    d3 = np.diag(np.diag(a3))
    common4 = a4 + 3 * (a * a2) - d3 @ a - d2 @ a2 - a @ d3 - a2 @ d2 - a @ d2 @ a
    return {
        "P2": a2,
        "C3": np.diag(a3).copy(),
        "P3": a3 + a - a @ d2 - d2 @ a,
        "C4": np.diag(a4) + np.diag(a2) - np.diag(a2 @ d2) - np.diag(a @ d2 @ a),
        "P4": common4 + 2 * a2,
        "P4_literal": common4 + a2,
    }


def _digest(payload: str) -> str:
    return hashlib.blake2b(payload.encode(), digest_size=10).hexdigest()


def _refine(neighbours, colours):
    return [
        _digest(colours[u] + "|" + ",".join(sorted(colours[w] for w in nbrs)))
        for u, nbrs in enumerate(neighbours)
    ]


def wl1_refine(g: Graph, rounds: int | None = None) -> list[tuple[str, int]]:
    """Colour histogram after ``rounds`` refinements, or at the stable partition.

    Colours start uniform and are content hashes of (own colour, sorted
    neighbour colours), so histograms of different graphs are directly
    comparable.  With ``rounds=None`` refinement stops at the first round whose
    class count does not grow; two 1-WL-equivalent graphs stop at the same
    round with identical histograms.
    """
    indptr, indices = g.csr()
    neighbours = [indices[indptr[u]:indptr[u + 1]].tolist() for u in range(g.n)]
    colours = ["0"] * g.n
    limit = g.n if rounds is None else rounds
    for _ in range(limit):
        new = _refine(neighbours, colours)
        stable = len(set(new)) == len(set(colours))
        colours = new
        if rounds is None and stable:
            break
    return sorted(Counter(colours).items())


def wl1_equivalent(g1: Graph, g2: Graph) -> bool:
    """True when 1-WL colour refinement cannot tell the graphs apart."""
    return g1.n == g2.n and wl1_refine(g1) == wl1_refine(g2)
