"""Spectral bases, eigenvalue functions and factorized kernel evaluation.

A basis holds the ``d`` smallest eigenpairs of a symmetric graph matrix; row
``u`` of the eigenvector matrix is the positional encoding ``p_u``.  Kernels
are ``K(u, v) = sum_k phi(lambda_k) p_u[k] p_v[k]`` and never need an n x n
intermediate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import (
    ConvergenceFailure,
    IndexOutOfRange,
    InvalidParameter,
    PartialBasis,
    ShapeMismatch,
    SizeCapExceeded,
)
from .graph import SymMatrix

__all__ = [
    "SpectralBasis",
    "AugmentedPE",
    "eig_full",
    "eig_topd",
    "phi_fixed",
    "augment_pe",
    "kernel_eval",
    "reconstruct_power",
    "pad_basis",
    "FULL_SIZE_CAP",
]

FULL_SIZE_CAP = 4096


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    eigenvalues: np.ndarray  # (d,) ascending
    eigenvectors: np.ndarray  # (n, d)
    source_kind: str
    full: bool
    mask: np.ndarray | None = None  # (d,) bool; False marks zero padding
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return int(self.eigenvalues.shape[0])

    @property
    def n(self) -> int:
        return int(self.eigenvectors.shape[0])

    @property
    def valid(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.d, dtype=bool)
        return self.mask

    def pe(self, u: int) -> np.ndarray:
        return self.eigenvectors[u]

    def with_vectors(self, vectors: np.ndarray) -> "SpectralBasis":
        return SpectralBasis(self.eigenvalues, vectors, self.source_kind, self.full, self.mask, self.meta)


@dataclass(frozen=True, eq=False)
class AugmentedPE:
    z: np.ndarray  # (n, d, m)
    phi_spec: str


def _dense(m: SymMatrix | np.ndarray) -> np.ndarray:
    if isinstance(m, SymMatrix):
        return m.toarray()
    if sp.issparse(m):
        return m.toarray()
    return np.asarray(m, dtype=np.float64)


def _kind(m) -> str:
    return m.kind if isinstance(m, SymMatrix) else "unknown"


def _check_contract(mat_apply, vals, vecs, tol_res: float, tol_orth: float = 1e-8):
    gram = vecs.T @ vecs
    orth = np.abs(gram - np.eye(vecs.shape[1])).max() if vecs.size else 0.0
    res = np.linalg.norm(mat_apply(vecs) - vecs * vals, axis=0) if vecs.size else np.zeros(0)
    worst = float(res.max()) if res.size else 0.0
    if orth >= tol_orth or worst >= tol_res:
        raise ConvergenceFailure(
            f"eigenbasis contract violated: orthonormality {orth:.2e}, residual {worst:.2e}",
            residual=worst,
        )
    return res


def eig_full(m: SymMatrix | np.ndarray, size_cap: int = FULL_SIZE_CAP) -> SpectralBasis:
    """All eigenpairs, ascending, via LAPACK's symmetric solver."""
    a = _dense(m)
    n = a.shape[0]
    if n > size_cap:
        raise SizeCapExceeded(f"full decomposition capped at n={size_cap}, got n={n}")
    try:
        vals, vecs = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"dense eigensolver failed: {exc}") from exc
    res = _check_contract(lambda x: a @ x, vals, vecs, tol_res=1e-6 * max(1.0, np.abs(vals).max(initial=0)))
    return SpectralBasis(
        vals, vecs, _kind(m), True, None,
        {"solver": "dense_eigh", "max_residual": float(res.max(initial=0.0))},
    )


def _orthogonalize(w: np.ndarray, basis: np.ndarray) -> np.ndarray:
    # classical Gram-Schmidt applied twice
    if basis.shape[1] == 0:
        return w
    for _ in range(2):
        w = w - basis @ (basis.T @ w)
    return w


def _lanczos_smallest(apply, n, want, locked, rng, tol, max_basis, max_restarts):
    """Thick-restart Lanczos with full reorthogonalization on the complement of ``locked``.

    Returns ``(values, vectors, residuals, matvecs)`` for the ``want`` smallest
    Ritz pairs once every residual is below ``tol``.
    """
    free_dim = n - locked.shape[1]
    want = min(want, free_dim)
    max_basis = min(max_basis, free_dim)
    keep = min(max(want + (max_basis - want) // 2, want), max_basis - 1) if max_basis > want else want

    def fresh(basis):
        for _ in range(10):
            v = _orthogonalize(rng.standard_normal(n), np.hstack([locked, basis]))
            nrm = np.linalg.norm(v)
            if nrm > 1e-8:
                return v / nrm
        raise ConvergenceFailure("could not draw a start vector outside the current basis")

    basis = np.zeros((n, 0))
    images = np.zeros((n, 0))
    nxt = fresh(basis)
    matvecs = 0
    worst = np.inf
    for restart in range(max_restarts + 1):
        cols_v, cols_av = [basis[:, i] for i in range(basis.shape[1])], [images[:, i] for i in range(images.shape[1])]
        v = nxt
        while True:
            av = apply(v)
            matvecs += 1
            cols_v.append(v)
            cols_av.append(av)
            if len(cols_v) >= max_basis:
                break
            current = np.column_stack(cols_v)
            w = _orthogonalize(av, np.hstack([locked, current]))
            nrm = np.linalg.norm(w)
            if nrm < 1e-10 * max(1.0, np.linalg.norm(av)):
                # invariant subspace reached: continue from a new seeded direction
                if len(cols_v) >= free_dim:
                    break
                w = fresh(current)
                nrm = 1.0
            v = w / nrm
        basis = np.column_stack(cols_v)
        images = np.column_stack(cols_av)
        h = basis.T @ images
        h = 0.5 * (h + h.T)
        theta, s = np.linalg.eigh(h)
        ritz = basis @ s
        ritz_images = images @ s
        res = np.linalg.norm(ritz_images[:, :want] - ritz[:, :want] * theta[:want], axis=0)
        worst = float(res.max(initial=0.0))
        if worst < tol or basis.shape[1] >= free_dim:
            return theta[:want], ritz[:, :want], res, matvecs
        # restart: keep the lowest Ritz vectors, continue the Krylov sequence
        basis, images = ritz[:, :keep], ritz_images[:, :keep]
        kept_res = images - basis * theta[:keep]
        w = kept_res[:, int(np.argmax(np.linalg.norm(kept_res, axis=0)))]
        w = _orthogonalize(w, np.hstack([locked, basis]))
        nrm = np.linalg.norm(w)
        nxt = w / nrm if nrm > 1e-10 else fresh(basis)
    raise ConvergenceFailure(
        f"Lanczos did not converge after {max_restarts} restarts ({matvecs} matvecs); "
        f"worst residual {worst:.2e}",
        iterations=matvecs,
        residual=worst,
    )


def eig_topd(
    m: SymMatrix | np.ndarray,
    d: int,
    seed: int = 0,
    tol: float = 1e-9,
    max_basis: int | None = None,
    max_restarts: int = 500,
) -> SpectralBasis:
    """The ``d`` smallest eigenpairs by iterative Lanczos.

    Converged pairs are locked and a deflated pass from a fresh seeded start
    vector then checks for eigenvalues the Krylov space missed (repeated
    eigenvalues have a one-dimensional footprint in any single Krylov space);
    passes repeat until the complement holds nothing below the current set.
    """
    if isinstance(m, SymMatrix):
        op = m.storage if m.is_sparse else np.asarray(m.storage)
        n = m.n
    else:
        op = m if sp.issparse(m) else np.asarray(m, dtype=np.float64)
        n = op.shape[0]
    if d < 1 or d > n:
        raise InvalidParameter(f"need 1 <= d <= n, got d={d}, n={n}")
    rng = np.random.default_rng(seed)

    def apply(x):
        return op @ x

    if max_basis is None:
        max_basis = max(2 * d + 20, 64)
    vals = np.zeros(0)
    vecs = np.zeros((n, 0))
    total_mv = 0
    passes = 0
    while True:
        passes += 1
        missing = d - vals.size
        want = missing if missing > 0 else 1
        theta, ritz, _, mv = _lanczos_smallest(apply, n, want, vecs, rng, tol, max_basis, max_restarts)
        total_mv += mv
        if missing > 0:
            vals = np.concatenate([vals, theta])
            vecs = np.hstack([vecs, ritz])
        elif theta.size and theta[0] < vals.max() - 10 * tol:
            vals = np.concatenate([vals, theta[:1]])
            vecs = np.hstack([vecs, ritz[:, :1]])
        else:
            break
        order = np.argsort(vals, kind="stable")
        vals, vecs = vals[order][:d], vecs[:, order][:, :d]
        if vals.size == n:
            break
        if passes > 4 * d + 10:
            raise ConvergenceFailure("deflation passes did not settle", iterations=total_mv)
    res = _check_contract(apply, vals, vecs, tol_res=max(1e-6, 10 * tol))
    return SpectralBasis(
        vals, vecs, _kind(m), d == n, None,
        {"solver": "lanczos", "matvecs": total_mv, "passes": passes,
         "max_residual": float(res.max(initial=0.0)), "seed": int(seed)},
    )


def pad_basis(basis: SpectralBasis, d: int) -> SpectralBasis:
    """Truncate or zero-pad to exactly ``d`` columns; padding is masked out."""
    k = basis.d
    mask = basis.valid.copy()
    if k >= d:
        return SpectralBasis(
            basis.eigenvalues[:d], basis.eigenvectors[:, :d], basis.source_kind,
            basis.full and k == d, mask[:d], basis.meta,
        )
    vals = np.concatenate([basis.eigenvalues, np.zeros(d - k)])
    vecs = np.hstack([basis.eigenvectors, np.zeros((basis.n, d - k))])
    mask = np.concatenate([mask, np.zeros(d - k, dtype=bool)])
    return SpectralBasis(vals, vecs, basis.source_kind, basis.full, mask, basis.meta)


def phi_fixed(family: str, eigenvalues, param: float | None = None) -> np.ndarray:
    """Fixed eigenvalue maps: ``power`` (lambda**t), ``heat`` (exp(-t lambda)), ``one``."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if family == "one":
        return np.ones_like(lam)
    if param is None or not np.isfinite(param):
        raise InvalidParameter(f"phi family {family!r} needs a finite parameter")
    if family == "power":
        return lam ** param
    if family == "heat":
        return np.exp(-param * lam)
    raise InvalidParameter(f"unknown phi family {family!r}")


PhiLike = Callable[[np.ndarray], np.ndarray]


def _phi_channels(phi, eigenvalues: np.ndarray) -> np.ndarray:
    if callable(phi):
        out = phi(eigenvalues)
    else:
        out = phi
    if isinstance(out, (list, tuple)):
        out = np.stack([np.asarray(c, dtype=np.float64) for c in out], axis=-1)
    out = np.asarray(out, dtype=np.float64)
    if out.ndim == 1:
        out = out[:, None]
    return out


def augment_pe(basis: SpectralBasis, phi, phi_spec: str = "custom") -> AugmentedPE:
    """``z[u, k, l] = phi_l(Lambda)[k] * p_u[k]``; padded columns are zero."""
    channels = _phi_channels(phi, basis.eigenvalues)
    if channels.shape[0] != basis.d:
        raise ShapeMismatch(f"phi returned {channels.shape[0]} rows for d={basis.d}")
    p = basis.eigenvectors * basis.valid
    return AugmentedPE(p[:, :, None] * channels[None, :, :], phi_spec)


def kernel_eval(basis: SpectralBasis, phi, u: int, v: int) -> float:
    if not (0 <= u < basis.n and 0 <= v < basis.n):
        raise IndexOutOfRange(f"nodes ({u}, {v}) outside [0, {basis.n})")
    weights = _phi_channels(phi, basis.eigenvalues)[:, 0] * basis.valid
    return float(np.sum(weights * basis.eigenvectors[u] * basis.eigenvectors[v]))


def reconstruct_power(basis: SpectralBasis, m: int) -> np.ndarray:
    """``V diag(lambda^m) V^T`` from a full adjacency basis."""
    if not basis.full or basis.d != basis.n:
        raise PartialBasis(f"need a full basis (d == n), got d={basis.d}, n={basis.n}")
    if basis.source_kind != "adjacency":
        raise PartialBasis(f"power reconstruction needs an adjacency basis, got {basis.source_kind}")
    v = basis.eigenvectors
    return (v * basis.eigenvalues ** m) @ v.T
