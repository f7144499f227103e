"""Reference (interpreted) versions of the compiled kernels in ``_ext.pyx``.

Signatures and results must stay identical to the Cython module; the test
suite runs both against each other.
"""

import numpy as np


def scatter_add_rows(values, index, n_out):
    """``out[index[i]] += values[i]`` for a 2-D float64 ``values``."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    out = np.zeros((n_out, values.shape[1]), dtype=np.float64)
    np.add.at(out, np.asarray(index, dtype=np.int64), values)
    return out


def cycle_counts(indptr, indices, n, length):
    """Per-node number of simple cycles with ``length`` edges.

    Each cycle is generated once: from its smallest vertex, through larger
    vertices only, keeping the orientation whose second vertex is smaller
    than its last.
    """
    counts = np.zeros(n, dtype=np.int64)
    adj = [indices[indptr[u]:indptr[u + 1]].tolist() for u in range(n)]
    neighbour_sets = [set(a) for a in adj]
    path = [0] * length
    on_path = [False] * n

    def extend(depth, start):
        last = path[depth - 1]
        if depth == length:
            if start in neighbour_sets[last] and path[1] < path[length - 1]:
                for w in path:
                    counts[w] += 1
            return
        for w in adj[last]:
            if w > start and not on_path[w]:
                on_path[w] = True
                path[depth] = w
                extend(depth + 1, start)
                on_path[w] = False

    for s in range(n):
        path[0] = s
        on_path[s] = True
        extend(1, s)
        on_path[s] = False
    return counts


def path_counts(indptr, indices, n, length):
    """Per-start-node number of simple paths with ``length`` edges."""
    counts = np.zeros(n, dtype=np.int64)
    adj = [indices[indptr[u]:indptr[u + 1]].tolist() for u in range(n)]
    on_path = [False] * n

    def extend(last, remaining):
        if remaining == 0:
            return 1
        total = 0
        for w in adj[last]:
            if not on_path[w]:
                on_path[w] = True
                total += extend(w, remaining - 1)
                on_path[w] = False
        return total

    for s in range(n):
        on_path[s] = True
        counts[s] = extend(s, length)
        on_path[s] = False
    return counts
