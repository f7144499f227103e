"""Fixed-weight GSSC stacks whose node outputs are exact path and cycle counts.

Every stack runs on the full adjacency basis.  Channel ``c`` of the positional
encoding carries ``lambda**c`` for ``c < 4`` and is zero otherwise, so the
cross kernel of output column ``j`` is ``q_j(A) k_j(A)`` for two polynomials
picked by the columns of ``W_q`` and ``W_k``; the self term gives the diagonal
of another such product.  With ``q = k = 1`` the kernel is ``I`` (complete
basis), which lets a column pass a feature through unchanged.

Between convolutions a readout ``y @ L + (y @ P1) * (y @ P2)`` forms linear
combinations and per-node products.  Input features are the constant 1 in
channel 0.

Cycle outputs follow the closed-walk convention (twice the undirected count);
path outputs are the off-diagonal row sums of the path polynomials.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, add, matmul, mul
from .errors import InvalidParameter, PartialBasis, SelectionNotConfigured
from .layers import GsscParams, gssc_forward, selection_forward
from .spectral import SpectralBasis, augment_pe

__all__ = ["CountingStage", "CountingStack", "counting_config", "counting_forward", "TARGETS"]

WIDTH = 16
EXPONENTS = 4  # z channels 0..3 carry lambda**0 .. lambda**3
TARGETS = ("C3", "P2", "P3", "C4", "P4")


@dataclass
class CountingStage:
    gssc: GsscParams
    L: np.ndarray
    P1: np.ndarray
    P2: np.ndarray


@dataclass
class CountingStack:
    target: str
    stages: list[CountingStage] = field(default_factory=list)
    source_kind: str = "adjacency"
    width: int = WIDTH


def _poly(coefs: dict[int, float]) -> np.ndarray:
    vec = np.zeros(WIDTH)
    for power, c in coefs.items():
        if not 0 <= power < EXPONENTS:
            raise InvalidParameter(f"kernel polynomials use powers 0..{EXPONENTS - 1}")
        vec[power] = c
    return vec


class _Stage:
    """Builder for one convolution followed by a linear/product readout."""

    def __init__(self, selective: bool = False):
        self.p = GsscParams.zeros(WIDTH, selective)
        self.L = np.zeros((WIDTH, WIDTH))
        self.P1 = np.zeros((WIDTH, WIDTH))
        self.P2 = np.zeros((WIDTH, WIDTH))

    def cross(self, col, q, k, o):
        self.p.W_q[:, col] = _poly(q)
        self.p.W_k[:, col] = _poly(k)
        for ch, c in o.items():
            self.p.W_o[ch, col] = c

    def own(self, col, q, k, s):
        self.p.W_sq[:, col] = _poly(q)
        self.p.W_sk[:, col] = _poly(k)
        for ch, c in s.items():
            self.p.W_s[ch, col] = c

    def keep(self, *cols):
        for c in cols:
            self.L[c, c] = 1.0

    def lin(self, out, src, coef=1.0):
        self.L[src, out] += coef

    def prod(self, out, a, b, coef=1.0):
        if self.P1[:, out].any():
            raise InvalidParameter(f"readout column {out} already holds a product")
        self.P1[a, out] = coef
        self.P2[b, out] = 1.0

    def build(self) -> CountingStage:
        return CountingStage(self.p, self.L, self.P1, self.P2)


ONE = {0: 1.0}
LAM = {1: 1.0}


def _c3():
    s = _Stage()
    s.own(0, LAM, {2: 1.0}, {0: 1.0})  # diag(A A^2)
    s.keep(0)
    return [s]


def _p2():
    s = _Stage()
    s.cross(0, LAM, LAM, {0: 1.0})  # sum_v A^2
    s.own(0, LAM, LAM, {0: -1.0})  # minus diag(A^2)
    s.keep(0)
    return [s]


def _p3():
    # channels after stage 1: 0 const, 1 degree, 2 diag(A^2), 3 rowsum(A^3 + A) - diag(A^3)
    s1 = _Stage()
    s1.own(0, ONE, ONE, {0: 1.0})
    s1.cross(1, LAM, ONE, {0: 1.0})
    s1.own(2, LAM, LAM, {0: 1.0})
    s1.cross(3, {3: 1.0, 1: 1.0}, ONE, {0: 1.0})
    s1.own(3, LAM, {2: 1.0}, {0: -1.0})
    s1.keep(0, 1, 2, 3)
    # stage 2: subtract sum_v A_uv d2_v, then d2_u * deg_u
    s2 = _Stage()
    s2.own(0, ONE, ONE, {3: 1.0})
    s2.cross(0, LAM, ONE, {2: -1.0})
    s2.own(1, ONE, ONE, {1: 1.0})
    s2.own(2, ONE, ONE, {2: 1.0})
    s2.keep(0)
    s2.prod(0, 1, 2, -1.0)
    return [s1, s2]


def _c4():
    # stage 1: 0 const, 1 d2, 2 diag(A^4) + d2 - d2^2
    s1 = _Stage()
    s1.own(0, ONE, ONE, {0: 1.0})
    s1.own(1, LAM, LAM, {0: 1.0})
    s1.own(2, {2: 1.0}, {2: 1.0, 0: 1.0}, {0: 1.0})
    s1.keep(0, 1, 2)
    s1.prod(2, 1, 1, -1.0)
    # stage 2 (selective): z~0 = p, z~1 = sum_v A_uv lambda p_v d2_v, so
    # <z~0_u, z~1_u> = diag(A diag(A^2) A)_u
    s2 = _Stage(selective=True)
    s2.p.W_dq[0, 0] = 1.0
    s2.p.W_dk[0, 0] = 1.0
    s2.p.W_dv[0, 0] = 1.0
    s2.p.W_dq[1, 1] = 1.0
    s2.p.W_dk[0, 1] = 1.0
    s2.p.W_dv[1, 1] = 1.0
    s2.cross(0, ONE, ONE, {2: 1.0})
    s2.own(0, ONE, LAM, {0: -1.0})
    s2.keep(0)
    return [s1, s2]


def _p4():
    s1 = _Stage()
    s1.own(0, ONE, ONE, {0: 1.0})  # const
    s1.cross(1, LAM, ONE, {0: 1.0})  # degree
    s1.own(2, LAM, LAM, {0: 1.0})  # d2 = diag(A^2)
    s1.own(3, LAM, {2: 1.0}, {0: 1.0})  # c3 = diag(A^3)
    s1.cross(4, {2: 1.0}, {2: 1.0, 0: 2.0}, {0: 1.0})  # rowsum(A^4 + 2A^2)
    s1.own(4, {2: 1.0}, {2: 1.0, 0: 2.0}, {0: -1.0})  # minus its diagonal
    s1.cross(5, LAM, LAM, {0: 1.0})  # rowsum(A^2)
    s1.keep(0, 2, 3)
    s1.prod(1, 2, 1)  # d2 * deg
    s1.lin(4, 4)
    s1.prod(4, 3, 1, -1.0)  # - c3 * deg
    s1.prod(5, 2, 5, -1.0)  # - d2 * rowsum(A^2)
    s1.prod(6, 2, 2, 2.0)  # + 2 d2^2

    s2 = _Stage()
    s2.own(0, ONE, ONE, {0: 1.0})
    s2.own(1, ONE, ONE, {4: 1.0, 5: 1.0, 6: 1.0})
    s2.cross(1, LAM, ONE, {3: -1.0, 1: -1.0, 2: 1.0})  # A (-c3 - d2 deg + d2)
    s2.cross(2, LAM, LAM, {2: -1.0})  # - A^2 d2
    s2.keep(0, 1)
    s2.lin(1, 2)
    s2.lin(2, 0)  # const again, read by the selection values

    # stage 3 (selective): <z~0_u, z~1_u> = sum_v A_uv A^2_uv
    s3 = _Stage(selective=True)
    s3.p.W_dq[0, 0] = 1.0
    s3.p.W_dk[0, 0] = 1.0
    s3.p.W_dv[0, 0] = 1.0
    s3.p.W_dq[1, 1] = 1.0
    s3.p.W_dk[0, 1] = 1.0
    s3.p.W_dv[2, 1] = 1.0
    s3.cross(0, ONE, ONE, {1: 1.0})
    s3.own(0, ONE, LAM, {0: 3.0})
    s3.keep(0)
    return [s1, s2, s3]


_BUILDERS = {"C3": _c3, "P2": _p2, "P3": _p3, "C4": _c4, "P4": _p4}
_NEEDS_SELECTION = {"C4", "P4"}


def counting_config(target: str, selective: bool = True) -> CountingStack:
    """Constructed stack for ``target`` in C3, P2, P3, C4, P4.

    C4 and P4 contain Hadamard-type terms that only the selection mechanism
    provides, so they refuse ``selective=False``.
    """
    if target not in _BUILDERS:
        raise InvalidParameter(f"unknown counting target {target!r}; choose from {TARGETS}")
    if target in _NEEDS_SELECTION and not selective:
        raise SelectionNotConfigured(f"{target} needs the selection mechanism")
    return CountingStack(target, [s.build() for s in _BUILDERS[target]()])


def _channels(eigenvalues: np.ndarray) -> np.ndarray:
    phi = np.zeros((eigenvalues.size, WIDTH))
    for c in range(EXPONENTS):
        phi[:, c] = eigenvalues ** c
    return phi


def counting_forward(stack: CountingStack, basis: SpectralBasis) -> np.ndarray:
    """Per-node outputs of a constructed stack on the full adjacency basis."""
    if not basis.full or basis.source_kind != "adjacency":
        raise PartialBasis("counting stacks need the full adjacency spectrum")
    z = augment_pe(basis, _channels(basis.eigenvalues), "counting").z
    x = np.zeros((basis.n, stack.width))
    x[:, 0] = 1.0
    h = Tensor(x)
    for stage in stack.stages:
        zz = selection_forward(z, h, stage.gssc) if stage.gssc.selective else z
        y = gssc_forward(zz, h, stage.gssc)
        h = add(matmul(y, stage.L), mul(matmul(y, stage.P1), matmul(y, stage.P2)))
    return h.value[:, 0]
