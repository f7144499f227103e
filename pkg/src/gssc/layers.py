"""GSSC layers, the permutation-equivariant phi network, an edge-aware MPNN and
the block/stack composition used for training.

Feature rows multiply weights from the right: ``x @ W``.  Several graphs are
processed together as a ``GraphBatch`` whose nodes are contiguous per graph
(``offsets``); every global sum in the convolution is a per-segment sum, so
graphs never mix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import (
    Tensor,
    add,
    broadcast_to,
    concat,
    gelu,
    inner_over_axis,
    layer_norm,
    matmul,
    mul,
    pair_contract,
    reduce_sum,
    repeat_segments,
    reshape,
    scatter_add,
    segment_apply,
    segment_contract,
    segment_gram,
    segment_outer,
    segment_sum,
    take,
    tensor,
)
from .errors import InvalidParameter, SelectionNotConfigured, ShapeMismatch
from .graph import Graph
from .params import static
from .spectral import AugmentedPE, SpectralBasis, pad_basis, phi_fixed

__all__ = [
    "GraphBatch",
    "make_batch",
    "PhiNetwork",
    "init_phi",
    "phi_forward",
    "FactoredPE",
    "ProjectedPE",
    "positional_encodings",
    "GsscParams",
    "init_gssc",
    "gssc_forward",
    "selection_forward",
    "MPNNParams",
    "init_mpnn",
    "mpnn_forward",
    "BlockParams",
    "init_block",
    "block_forward",
    "LayerStack",
    "init_stack",
    "stack_forward",
    "pooled_embedding",
]


# ---------------------------------------------------------------- batching


@dataclass(frozen=True, eq=False)
class GraphBatch:
    offsets: np.ndarray  # (G + 1,)
    src: np.ndarray  # (2E,) global node ids, both orientations
    dst: np.ndarray
    edge_attr: np.ndarray | None  # (2E, m_e)
    node_attr: np.ndarray  # (N, f)
    eigenvalues: np.ndarray  # (G, d)
    mask: np.ndarray  # (G, d) bool
    pe: np.ndarray  # (N, d), zero in padded columns

    @property
    def num_graphs(self) -> int:
        return int(self.offsets.size - 1)

    @property
    def num_nodes(self) -> int:
        return int(self.offsets[-1])

    @property
    def d(self) -> int:
        return int(self.eigenvalues.shape[1])

    @property
    def graph_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_graphs), np.diff(self.offsets))


def make_batch(graphs: Sequence[Graph], bases: Sequence[SpectralBasis], d: int | None = None) -> GraphBatch:
    """Stack graphs and their bases; bases are truncated or zero-padded to ``d``."""
    if len(graphs) != len(bases) or not graphs:
        raise ShapeMismatch("need one basis per graph and at least one graph")
    if d is None:
        d = max(b.d for b in bases)
    offsets = np.zeros(len(graphs) + 1, dtype=np.int64)
    srcs, dsts, eattr, nattr, vals, masks, pes = [], [], [], [], [], [], []
    has_edge_attr = graphs[0].edge_features is not None
    for i, (g, b) in enumerate(zip(graphs, bases)):
        if b.n != g.n:
            raise ShapeMismatch(f"basis has {b.n} rows for a graph with {g.n} nodes")
        base = offsets[i]
        offsets[i + 1] = base + g.n
        s, t = g.directed_edges()
        srcs.append(s + base)
        dsts.append(t + base)
        if (g.edge_features is not None) != has_edge_attr:
            raise ShapeMismatch("either every graph in a batch has edge features or none does")
        if has_edge_attr:
            eattr.append(np.concatenate([g.edge_features, g.edge_features]))
        nattr.append(g.node_features if g.node_features is not None else np.ones((g.n, 1)))
        pb = pad_basis(b, d)
        vals.append(pb.eigenvalues)
        masks.append(pb.valid)
        pes.append(pb.eigenvectors * pb.valid)
    return GraphBatch(
        offsets,
        np.concatenate(srcs).astype(np.int64),
        np.concatenate(dsts).astype(np.int64),
        np.concatenate(eattr) if has_edge_attr else None,
        np.concatenate(nattr).astype(np.float64),
        np.stack(vals),
        np.stack(masks),
        np.concatenate(pes),
    )


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------- phi network


@dataclass
class PhiNetwork:
    """Per-eigenvalue map ``rho(lambda_k, mean_j psi(lambda_j))`` with m output channels.

    ``alpha * lambda + beta`` is a linear skip so the network can start as the
    identity on eigenvalues.  With ``shared=False`` the hidden layer is split
    into m independent groups, one per output channel.
    """

    w_psi: np.ndarray  # (1, h)
    b_psi: np.ndarray  # (h,)
    w_lam: np.ndarray  # (1, H)
    W_ctx: np.ndarray  # (h, H)
    b1: np.ndarray  # (H,)
    W2: np.ndarray  # (H, m)
    b2: np.ndarray  # (m,)
    alpha: np.ndarray  # (m,)
    beta: np.ndarray  # (m,)
    w2_mask: np.ndarray | None = static(None)

    @property
    def channels(self) -> int:
        return int(np.shape(self.b2)[0])

    @classmethod
    def identity(cls, m: int, inner_width: int = 4) -> "PhiNetwork":
        h = inner_width
        z = np.zeros
        return cls(z((1, h)), z(h), z((1, h)), z((h, h)), z(h), z((h, m)), z(m), np.ones(m), z(m))


def init_phi(m: int, rng: np.random.Generator, inner_width: int = 16, shared: bool = True,
             out_scale: float = 0.01) -> PhiNetwork:
    h = inner_width
    hidden = h if shared else h * m
    mask = None
    if not shared:
        mask = np.kron(np.eye(m), np.ones((h, 1)))  # (h*m, m) block diagonal
    return PhiNetwork(
        w_psi=_uniform(rng, (1, h), 1),
        b_psi=_uniform(rng, (h,), 1),
        w_lam=_uniform(rng, (1, hidden), 1),
        W_ctx=_uniform(rng, (h, hidden), h),
        b1=_uniform(rng, (hidden,), 1),
        W2=rng.uniform(-out_scale, out_scale, size=(hidden, m)),
        b2=np.zeros(m),
        alpha=np.ones(m),
        beta=np.zeros(m),
        w2_mask=mask,
    )


def phi_forward(net: PhiNetwork, eigenvalues, mask=None) -> Tensor:
    """Channel values ``phi_l(Lambda)[k]``: shape (d, m), or (G, d, m) for a (G, d) input.

    The pooled context averages over valid entries only; padded entries still
    get finite outputs, which callers pair with zero positional encodings.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    single = lam.ndim == 1
    if single:
        lam = lam[None]
    g, d = lam.shape
    valid = np.ones((g, d), dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(g, d)
    count = np.maximum(valid.sum(axis=1), 1).astype(np.float64)
    h = net.w_psi.shape[1]
    hidden = net.w_lam.shape[1]
    m = net.channels
    lam3 = lam[:, :, None]

    psi = gelu(add(matmul(lam3, net.w_psi), broadcast_to(net.b_psi, (g, d, h))))
    weights = np.broadcast_to((valid / count[:, None])[:, :, None], (g, d, h))
    ctx = reduce_sum(mul(psi, weights), axis=1)  # (g, h)
    ctx_h = reshape(matmul(ctx, net.W_ctx), (g, 1, hidden))
    pre = add(add(matmul(lam3, net.w_lam), broadcast_to(ctx_h, (g, d, hidden))),
              broadcast_to(net.b1, (g, d, hidden)))
    w2 = net.W2 if net.w2_mask is None else mul(net.W2, net.w2_mask)
    out = add(matmul(gelu(pre), w2), broadcast_to(net.b2, (g, d, m)))
    skip = add(mul(np.broadcast_to(lam3, (g, d, m)), broadcast_to(net.alpha, (g, d, m))),
               broadcast_to(net.beta, (g, d, m)))
    out = add(out, skip)
    return reshape(out, (d, m)) if single else out


def value_shape(x):
    return np.shape(x.value if isinstance(x, Tensor) else x)


# ---------------------------------------------------------------- GSSC


@dataclass
class GsscParams:
    W_q: np.ndarray
    W_k: np.ndarray
    W_o: np.ndarray
    W_sq: np.ndarray
    W_sk: np.ndarray
    W_s: np.ndarray
    W_dq: np.ndarray | None = None
    W_dk: np.ndarray | None = None
    W_dv: np.ndarray | None = None

    @property
    def selective(self) -> bool:
        return self.W_dq is not None

    @property
    def m(self) -> int:
        return int(value_shape(self.W_q)[0])

    @classmethod
    def zeros(cls, m: int, selective: bool = False) -> "GsscParams":
        mats = [np.zeros((m, m)) for _ in range(6)]
        sel = [np.zeros((m, m)) for _ in range(3)] if selective else [None] * 3
        return cls(*mats, *sel)


def init_gssc(m: int, rng: np.random.Generator, selective: bool = False) -> GsscParams:
    mats = [_uniform(rng, (m, m), m) for _ in range(6)]
    sel = [_uniform(rng, (m, m), m) for _ in range(3)] if selective else [None] * 3
    return GsscParams(*mats, *sel)


@dataclass(frozen=True, eq=False)
class FactoredPE:
    """Encodings kept as ``p`` (N, d) and per-graph channel values ``phi`` (G, d, m).

    ``z[u, k, l] = phi[g(u), k, l] * p[u, k]`` is never materialized by the
    convolution, which keeps memory at O(N (d + m)).
    """

    p: np.ndarray
    phi: Tensor
    offsets: np.ndarray

    def scaled(self, per_graph) -> Tensor:
        """``p[u, k] * per_graph[g(u), k, l]`` for a (G, d, m) tensor."""
        n, d = self.p.shape
        m = per_graph.shape[2]
        per_node = repeat_segments(per_graph, self.offsets)
        return mul(per_node, np.broadcast_to(self.p[:, :, None], (n, d, m)))

    def materialize(self) -> Tensor:
        return self.scaled(self.phi)


@dataclass
class ProjectedPE:
    """Encodings ``z[u, l, j] = sum_k p[u, k] * R[g(u), k, l, j]``.

    Selection outputs have this form when their input is factored; keeping
    ``R`` (G, d, d, m) per graph lets the next convolution mix channels once
    per graph instead of once per node.
    """

    p: np.ndarray
    R: Tensor
    offsets: np.ndarray

    def materialize(self) -> Tensor:
        n, d = self.p.shape
        g, _, _, m = self.R.shape
        flat = segment_apply(self.p, reshape(self.R, (g, d, d * m)), self.offsets)
        return reshape(flat, (n, d, m))


def _pair_products(p: np.ndarray) -> np.ndarray:
    n, d = p.shape
    return (p[:, :, None] * p[:, None, :]).reshape(n, d * d)


def _z_tensor(z) -> Tensor:
    if isinstance(z, (FactoredPE, ProjectedPE)):
        return z.materialize()
    if isinstance(z, AugmentedPE):
        z = z.z
    z = tensor(z)
    if z.ndim != 3:
        raise ShapeMismatch(f"positional encodings must be (n, d, m), got {z.shape}")
    return z


def _spread(v: Tensor, d: int) -> Tensor:
    # (n, m) -> (n, d, m), same row for every k
    n, m = v.shape
    return broadcast_to(reshape(v, (n, 1, m)), (n, d, m))


def gssc_forward(z, x, params: GsscParams, offsets=None) -> Tensor:
    """One graph state space convolution.

    ``h_u = <z_u W_q, sum_v z_v W_k * (x_v W_o)> + <z_u W_sq, z_u W_sk * (x_u W_s)>``
    where ``<., .>`` contracts the eigen axis only.  The global sum is
    accumulated once per graph (segment) and read out per node, so cost is
    linear in the number of nodes.
    """
    if isinstance(z, FactoredPE):
        return _gssc_factored(z, x, params)
    if isinstance(z, ProjectedPE):
        return _gssc_projected(z, x, params)
    z = _z_tensor(z)
    x = tensor(x)
    n, d, m = z.shape
    if x.shape != (n, m):
        raise ShapeMismatch(f"features {x.shape} do not match encodings {z.shape}")
    if params.m != m:
        raise ShapeMismatch(f"weights are {params.m}-dimensional, encodings have {m} channels")
    keys = mul(matmul(z, params.W_k), _spread(matmul(x, params.W_o), d))
    if offsets is None:
        total = broadcast_to(reduce_sum(keys, axis=0, keepdims=True), (n, d, m))
    else:
        total = repeat_segments(segment_sum(keys, offsets), offsets)
    mixed = inner_over_axis(matmul(z, params.W_q), total, axis=1)
    own = mul(matmul(z, params.W_sk), _spread(matmul(x, params.W_s), d))
    self_term = inner_over_axis(matmul(z, params.W_sq), own, axis=1)
    return add(mixed, self_term)


def _gssc_factored(z: FactoredPE, x, params: GsscParams) -> Tensor:
    # channel mixing acts on the (G, d, m) phi values; p enters through
    # per-graph p^T y sums and per-node p @ M readouts
    x = tensor(x)
    n, d = z.p.shape
    g, _, m = z.phi.shape
    if x.shape != (n, m):
        raise ShapeMismatch(f"features {x.shape} do not match encodings ({n}, {d}, {m})")
    if params.m != m:
        raise ShapeMismatch(f"weights are {params.m}-dimensional, encodings have {m} channels")
    phi = z.phi
    state = segment_gram(z.p, matmul(x, params.W_o), z.offsets)  # (G, d, m)
    kernel = mul(matmul(phi, params.W_q), matmul(phi, params.W_k))
    mixed = segment_apply(z.p, mul(kernel, state), z.offsets)
    own_kernel = mul(matmul(phi, params.W_sq), matmul(phi, params.W_sk))
    own = segment_apply(z.p * z.p, own_kernel, z.offsets)
    return add(mixed, mul(own, matmul(x, params.W_s)))


def _gssc_projected(z: ProjectedPE, x, params: GsscParams) -> Tensor:
    # z_u W = sum_k p_uk (R_k W): mixing on R, then d x d contractions per graph
    x = tensor(x)
    n, d = z.p.shape
    g, _, _, m = z.R.shape
    if x.shape != (n, m):
        raise ShapeMismatch(f"features {x.shape} do not match encodings ({n}, {d}, {m})")
    if params.m != m:
        raise ShapeMismatch(f"weights are {params.m}-dimensional, encodings have {m} channels")
    full = (g, d, d, m)
    state = segment_gram(z.p, matmul(x, params.W_o), z.offsets)  # (G, k, j)
    keys = matmul(z.R, params.W_k)
    summed = reduce_sum(mul(keys, broadcast_to(reshape(state, (g, d, 1, m)), full)), axis=1)  # (G, l, j)
    queries = matmul(z.R, params.W_q)
    read = reduce_sum(mul(queries, broadcast_to(reshape(summed, (g, 1, d, m)), full)), axis=2)  # (G, k, j)
    mixed = segment_apply(z.p, read, z.offsets)
    pair = pair_contract(matmul(z.R, params.W_sq), matmul(z.R, params.W_sk))  # (G, k, k', j)
    own = segment_apply(_pair_products(z.p), reshape(pair, (g, d * d, m)), z.offsets)
    return add(mixed, mul(own, matmul(x, params.W_s)))


def _selection_factored(z: FactoredPE, x, params: GsscParams) -> ProjectedPE:
    # With z_v = p_v * phi the value term folds into a per-graph state
    # S[k, l, i] = sum_v p_vk p_vl x_vi, so all channel mixing is per graph
    # and the per-node work is one (d^2) x (m) product.
    x = tensor(x)
    n, d = z.p.shape
    g, _, m = z.phi.shape
    if x.shape != (n, m):
        raise ShapeMismatch(f"features {x.shape} do not match encodings ({n}, {d}, {m})")
    full = (g, d, d, m)
    state = reshape(segment_gram(_pair_products(z.p), x, z.offsets), full)
    phi_l = broadcast_to(reshape(z.phi, (g, 1, d, m)), full)
    values = matmul(mul(state, phi_l), params.W_dv)  # (G, k, l, j)
    weight = mul(matmul(z.phi, params.W_dq), matmul(z.phi, params.W_dk))
    R = mul(values, broadcast_to(reshape(weight, (g, d, 1, m)), full))
    return ProjectedPE(z.p, R, z.offsets)


def selection_forward(z, x, params: GsscParams, offsets=None) -> Tensor:
    """Data-dependent encodings ``z~_u = sum_v <z_u W_dq, z_v W_dk> ((z_v * x_v) W_dv)``.

    The inner product contracts the eigen axis and yields one weight per
    channel; it scales the (d, m) value of each source node.  Evaluated as a
    per-graph (d, d, m) accumulation then a per-node contraction: O(n m d^2).
    Factored encodings give a :class:`ProjectedPE` whose per-node cost is
    one (d^2) x (m) product.
    """
    if not params.selective:
        raise SelectionNotConfigured("selection weights W_dq, W_dk, W_dv are not set")
    if isinstance(z, FactoredPE):
        return _selection_factored(z, x, params)
    z = _z_tensor(z)
    x = tensor(x)
    n, d, m = z.shape
    if x.shape != (n, m):
        raise ShapeMismatch(f"features {x.shape} do not match encodings {z.shape}")
    values = matmul(mul(z, _spread(x, d)), params.W_dv)
    keys = matmul(z, params.W_dk)
    state = segment_outer(keys, values, offsets)  # (G, d, d, m)
    return segment_contract(matmul(z, params.W_dq), state, offsets)


# ---------------------------------------------------------------- MPNN


@dataclass
class MPNNParams:
    """Sum-aggregation message passing with edge-feature modulation (GINE-style).

    Message ``u -> v`` is ``gelu(x_u + e_uv W_edge)`` when edge features are
    present and ``x_u`` otherwise; the update is
    ``MLP((1 + eps) x_v + sum of messages)``, or the identity map of that sum
    when ``W1`` is None.
    """

    eps: np.ndarray  # (1,)
    W1: np.ndarray | None
    b1: np.ndarray | None
    W2: np.ndarray | None
    b2: np.ndarray | None
    W_edge: np.ndarray | None = None

    @classmethod
    def identity(cls, eps: float = 0.0, W_edge=None) -> "MPNNParams":
        return cls(np.array([eps]), None, None, None, None, W_edge)


def init_mpnn(m: int, rng: np.random.Generator, edge_dim: int | None = None) -> MPNNParams:
    return MPNNParams(
        eps=np.zeros(1),
        W1=_uniform(rng, (m, m), m),
        b1=np.zeros(m),
        W2=_uniform(rng, (m, m), m),
        b2=np.zeros(m),
        W_edge=None if edge_dim is None else _uniform(rng, (edge_dim, m), edge_dim),
    )


def mpnn_forward(g, x, edge_feat, params: MPNNParams) -> Tensor:
    """One round of message passing over a ``Graph`` or ``GraphBatch``."""
    x = tensor(x)
    if isinstance(g, GraphBatch):
        src, dst, n = g.src, g.dst, g.num_nodes
        ef = g.edge_attr if edge_feat is None else edge_feat
    else:
        src, dst = g.directed_edges()
        n = g.n
        ef = edge_feat
        if ef is not None:
            ef = np.asarray(ef, dtype=np.float64)
            if ef.ndim == 2 and ef.shape[0] == g.num_edges:
                ef = np.concatenate([ef, ef])
    if x.shape[0] != n:
        raise ShapeMismatch(f"features have {x.shape[0]} rows for {n} nodes")
    m = x.shape[1]
    msg = take(x, src)
    if ef is not None and params.W_edge is not None:
        ef = tensor(ef)
        if ef.shape[0] != src.size:
            raise ShapeMismatch(f"{ef.shape[0]} edge feature rows for {src.size} directed edges")
        msg = gelu(add(msg, matmul(ef, params.W_edge)))
    agg = scatter_add(msg, dst, n)
    one_plus = add(broadcast_to(np.ones(1), (1,)), params.eps)
    h = add(mul(broadcast_to(one_plus, (n, m)), x), agg)
    if params.W1 is None:
        return h
    hid = gelu(add(matmul(h, params.W1), broadcast_to(params.b1, (n, m))))
    return add(matmul(hid, params.W2), broadcast_to(params.b2, (n, m)))


# ---------------------------------------------------------------- block / stack


@dataclass
class BlockParams:
    mpnn: MPNNParams
    gssc: GsscParams
    phi: PhiNetwork | None
    R1: np.ndarray  # (2m or m, m)
    rb1: np.ndarray
    R2: np.ndarray  # (m, m)
    rb2: np.ndarray
    ln_gamma: np.ndarray
    ln_beta: np.ndarray
    merge: str = static("concat")
    norm: str = static("layer")


def init_block(m: int, rng: np.random.Generator, selective: bool = False, learned_phi: bool = True,
               edge_dim: int | None = None, phi_width: int = 16, phi_shared: bool = True,
               merge: str = "concat", norm: str = "layer", phi_out_scale: float = 0.01) -> BlockParams:
    if merge not in ("concat", "sum") or norm not in ("layer", "none"):
        raise InvalidParameter(f"unknown merge/norm {merge!r}/{norm!r}")
    width = 2 * m if merge == "concat" else m
    return BlockParams(
        mpnn=init_mpnn(m, rng, edge_dim),
        gssc=init_gssc(m, rng, selective),
        phi=init_phi(m, rng, phi_width, phi_shared, phi_out_scale) if learned_phi else None,
        R1=_uniform(rng, (width, m), width),
        rb1=np.zeros(m),
        R2=_uniform(rng, (m, m), m),
        rb2=np.zeros(m),
        ln_gamma=np.ones(m),
        ln_beta=np.zeros(m),
        merge=merge,
        norm=norm,
    )


def _phi_values(batch: GraphBatch, phi, m: int) -> Tensor:
    """(G, d, m) channel values from a PhiNetwork or a fixed family spec."""
    if isinstance(phi, PhiNetwork):
        return phi_forward(phi, batch.eigenvalues, batch.mask)
    family, param = phi
    vals = phi_fixed(family, batch.eigenvalues, param) * batch.mask
    return Tensor(np.repeat(vals[:, :, None], m, axis=2))


def positional_encodings(batch: GraphBatch, phi, m: int) -> FactoredPE:
    """``z[u, k, l] = phi_l(Lambda_g(u))[k] * p_u[k]`` for every node of the batch."""
    return FactoredPE(batch.pe, _phi_values(batch, phi, m), batch.offsets)


def block_forward(batch: GraphBatch, x, params: BlockParams, fixed_phi=None) -> Tensor:
    """``Norm(x + Readout(MPNN(x) ++ GSSC(x)))`` with a mandatory residual."""
    x = tensor(x)
    n, m = x.shape
    phi = params.phi if params.phi is not None else fixed_phi
    if phi is None:
        raise InvalidParameter("block has no phi network and no fixed phi was given")
    z = positional_encodings(batch, phi, m)
    if params.gssc.selective:
        z = selection_forward(z, x, params.gssc, batch.offsets)
    h_mp = mpnn_forward(batch, x, None, params.mpnn)
    h_ss = gssc_forward(z, x, params.gssc, batch.offsets)
    merged = concat([h_mp, h_ss], axis=1) if params.merge == "concat" else add(h_mp, h_ss)
    hid = gelu(add(matmul(merged, params.R1), broadcast_to(params.rb1, (n, m))))
    out = add(x, add(matmul(hid, params.R2), broadcast_to(params.rb2, (n, m))))
    if params.norm == "layer":
        out = add(mul(layer_norm(out), broadcast_to(params.ln_gamma, (n, m))),
                  broadcast_to(params.ln_beta, (n, m)))
    return out


@dataclass
class LayerStack:
    W_in: np.ndarray  # (f, m)
    b_in: np.ndarray
    blocks: list
    H1: np.ndarray
    hb1: np.ndarray
    H2: np.ndarray  # (m, out)
    hb2: np.ndarray
    level: str = static("node")
    fixed_phi: tuple | None = static(None)
    source_kind: str = static("normalized_laplacian")

    @property
    def m(self) -> int:
        return int(value_shape(self.b_in)[0])

    @property
    def depth(self) -> int:
        return len(self.blocks)


def init_stack(m: int, depth: int, rng: np.random.Generator, in_dim: int = 1, out_dim: int = 1,
               level: str = "node", selective: bool = False, fixed_phi: tuple | None = None,
               source_kind: str = "normalized_laplacian", edge_dim: int | None = None,
               phi_width: int = 16, phi_shared: bool = True, norm: str = "layer") -> LayerStack:
    if level not in ("node", "graph"):
        raise InvalidParameter(f"level must be 'node' or 'graph', got {level!r}")
    blocks = [
        init_block(m, rng, selective, fixed_phi is None, edge_dim, phi_width, phi_shared, norm=norm)
        for _ in range(depth)
    ]
    return LayerStack(
        W_in=_uniform(rng, (in_dim, m), in_dim),
        b_in=_uniform(rng, (m,), 1),
        blocks=blocks,
        H1=_uniform(rng, (m, m), m),
        hb1=np.zeros(m),
        H2=_uniform(rng, (m, out_dim), m),
        hb2=np.zeros(out_dim),
        level=level,
        fixed_phi=fixed_phi,
        source_kind=source_kind,
    )


def stack_forward(stack: LayerStack, batch: GraphBatch) -> Tensor:
    """Node outputs (N, out) for a node-level stack, graph outputs (G, out) otherwise."""
    n = batch.num_nodes
    m = stack.m
    x = add(matmul(batch.node_attr, stack.W_in), broadcast_to(stack.b_in, (n, m)))
    for block in stack.blocks:
        x = block_forward(batch, x, block, stack.fixed_phi)
    if stack.level == "graph":
        x = segment_sum(x, batch.offsets)
    rows = x.shape[0]
    out_dim = value_shape(stack.hb2)[0]
    hid = gelu(add(matmul(x, stack.H1), broadcast_to(stack.hb1, (rows, m))))
    return add(matmul(hid, stack.H2), broadcast_to(stack.hb2, (rows, out_dim)))


def pooled_embedding(stack: LayerStack, g: Graph, basis: SpectralBasis) -> np.ndarray:
    """Permutation-invariant graph embedding: sum pooling then the MLP head."""
    if stack.level != "graph":
        raise InvalidParameter("pooled_embedding needs a graph-level stack")
    batch = make_batch([g], [basis], d=max(basis.d, 1))
    return stack_forward(stack, batch).value[0]
