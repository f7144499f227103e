"""Tape-based reverse-mode differentiation over numpy arrays.

Usage::

    with Tape() as tape:
        w = tape.watch(w0)
        loss = reduce_sum(mul(w, w))
    grads = tape.grad(loss, [w])

Operations executed while a tape is active are recorded on it; outside a tape
they just compute values.  There is no implicit broadcasting: elementwise ops
require equal shapes and ``broadcast_to`` is an explicit, differentiable op.
``matmul`` follows ``numpy.matmul`` batching for a 2-D right operand.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import InvalidParameter, NotScalar, ShapeMismatch, TapeConsumed

__all__ = [
    "Tensor",
    "Tape",
    "tensor",
    "value_of",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "broadcast_to",
    "reduce_sum",
    "pair_contract",
    "mean",
    "inner_over_axis",
    "exp",
    "gelu",
    "relu",
    "layer_norm",
    "reshape",
    "concat",
    "take",
    "scatter_add",
    "segment_sum",
    "repeat_segments",
    "segment_outer",
    "segment_contract",
    "segment_gram",
    "segment_apply",
    "finite_diff_check",
    "AdamState",
    "adam_step",
]

_local = threading.local()


def _active() -> "Tape | None":
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("value", "tape")

    def __init__(self, value, tape: "Tape | None" = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.tape = tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, taped={self.tape is not None})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


@dataclass
class _Node:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    nodes: list[_Node] = field(default_factory=list)
    consumed: bool = False

    def __enter__(self) -> "Tape":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.stack.pop()

    def watch(self, value) -> Tensor:
        """A leaf tensor recorded on this tape."""
        if isinstance(value, Tensor):
            if value.tape is not None and value.tape is not self:
                raise InvalidParameter("tensor already belongs to another live tape")
            value = value.value
        return Tensor(np.array(value, dtype=np.float64), self)

    def record(self, out: Tensor, inputs, backward) -> Tensor:
        if self.consumed:
            raise TapeConsumed("cannot record on a tape whose gradients were taken")
        out.tape = self
        self.nodes.append(_Node(out, tuple(inputs), backward))
        return out

    def grad(self, loss: Tensor, leaves):
        """Gradients of scalar ``loss`` with respect to ``leaves``.

        ``leaves`` may be a sequence (returns a list) or a mapping (returns a
        dict with the same keys).  Leaves the loss does not depend on get exact
        zeros.  A tape can be differentiated once.
        """
        if self.consumed:
            raise TapeConsumed("gradients already taken from this tape; re-record the forward pass")
        if loss.value.size != 1:
            raise NotScalar(f"loss must be scalar, got shape {loss.shape}")
        if loss.tape is not self:
            raise InvalidParameter("loss was not recorded on this tape")
        self.consumed = True
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.backward(g)):
                if gi is None or inp.tape is not self:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        self.nodes = []

        def lookup(t: Tensor) -> np.ndarray:
            g = grads.get(id(t))
            return np.zeros_like(t.value) if g is None else np.asarray(g, dtype=np.float64).reshape(t.shape)

        if isinstance(leaves, dict):
            return {k: lookup(t) for k, t in leaves.items()}
        return [lookup(t) for t in leaves]


def _emit(value, inputs, backward) -> Tensor:
    out = Tensor(value)
    tape = None
    for t in inputs:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise InvalidParameter("inputs come from two different tapes")
            tape = t.tape
    if tape is None:
        return out
    current = _active()
    if current is not None and current is not tape:
        raise InvalidParameter("operation on a tensor from an inactive tape")
    return tape.record(out, inputs, backward)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} differ (broadcast explicitly)")


def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _same_shape(a, b, "add")
    return _emit(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _same_shape(a, b, "sub")
    return _emit(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _same_shape(a, b, "mul")
    av, bv = a.value, b.value
    return _emit(av * bv, (a, b), lambda g: (g * bv, g * av))


def neg(a) -> Tensor:
    a = tensor(a)
    return _emit(-a.value, (a,), lambda g: (-g,))


def scale(a, c: float) -> Tensor:
    """Multiply by a constant (non-differentiated) scalar."""
    a = tensor(a)
    return _emit(a.value * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    if b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value

    def backward(g):
        ga = g @ bv.T
        gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _emit(av @ bv, (a, b), backward)


def _broadcast_axes(src: tuple[int, ...], dst: tuple[int, ...]) -> tuple[int, ...]:
    lead = len(dst) - len(src)
    axes = list(range(lead))
    axes += [lead + i for i, s in enumerate(src) if s == 1 and dst[lead + i] != 1]
    return tuple(axes)


def broadcast_to(a, shape) -> Tensor:
    a = tensor(a)
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.value, shape)
    except ValueError as exc:
        raise ShapeMismatch(f"cannot broadcast {a.shape} to {shape}") from exc
    axes = _broadcast_axes(a.shape, shape)
    src = a.shape

    def backward(g):
        return (g.sum(axis=axes).reshape(src) if axes else g,)

    return _emit(np.array(out), (a,), backward)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = tensor(a)
    shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _emit(a.value.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean(a, axis=None) -> Tensor:
    a = tensor(a)
    count = a.value.size if axis is None else a.shape[axis]
    return scale(reduce_sum(a, axis=axis), 1.0 / count)


def inner_over_axis(a, b, axis: int) -> Tensor:
    """``sum(a * b, axis)`` as one fused op."""
    a, b = tensor(a), tensor(b)
    _same_shape(a, b, "inner_over_axis")
    av, bv = a.value, b.value

    def backward(g):
        g = np.expand_dims(g, axis)
        return g * bv, g * av

    return _emit(np.einsum("...,...->...", av, bv).sum(axis=axis), (a, b), backward)


def exp(a) -> Tensor:
    a = tensor(a)
    out = np.exp(a.value)
    return _emit(out, (a,), lambda g: (g * out,))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a) -> Tensor:
    """Tanh-form GELU: ``0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))``."""
    a = tensor(a)
    x = a.value
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * dinner),)

    return _emit(out, (a,), backward)


def relu(a) -> Tensor:
    a = tensor(a)
    on = a.value > 0
    return _emit(a.value * on, (a,), lambda g: (g * on,))


def layer_norm(a, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis (no affine part)."""
    a = tensor(a)
    x = a.value
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gy),)

    return _emit(y, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = tensor(a)
    src = a.shape
    return _emit(a.value.reshape(shape), (a,), lambda g: (g.reshape(src),))


def concat(parts, axis: int = -1) -> Tensor:
    parts = [tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _emit(np.concatenate([p.value for p in parts], axis=axis), parts, backward)


def take(a, index) -> Tensor:
    """Rows ``a[index]`` (gather along axis 0)."""
    a = tensor(a)
    idx = np.asarray(index, dtype=np.int64)
    rows = a.shape[0]
    tail = a.shape[1:]

    def backward(g):
        flat = kernels.scatter_add_rows(g.reshape(idx.size, -1), idx, rows)
        return (flat.reshape((rows,) + tail),)

    return _emit(a.value[idx], (a,), backward)


def scatter_add(a, index, n_out: int) -> Tensor:
    """``out[index[i]] += a[i]`` along axis 0."""
    a = tensor(a)
    idx = np.asarray(index, dtype=np.int64)
    if idx.shape[0] != a.shape[0]:
        raise ShapeMismatch(f"scatter_add: {idx.shape[0]} indices for {a.shape[0]} rows")
    tail = a.shape[1:]
    flat = kernels.scatter_add_rows(a.value.reshape(a.shape[0], -1), idx, n_out)
    return _emit(flat.reshape((n_out,) + tail), (a,), lambda g: (g[idx],))


def _offsets(offsets, rows: int) -> np.ndarray:
    if offsets is None:
        return np.array([0, rows], dtype=np.int64)
    off = np.asarray(offsets, dtype=np.int64)
    if off[0] != 0 or off[-1] != rows or (np.diff(off) <= 0).any():
        raise ShapeMismatch(f"segment offsets {off.tolist()} do not tile {rows} rows")
    return off


def segment_sum(a, offsets=None) -> Tensor:
    """Sum rows over contiguous segments ``[off[i], off[i+1])``."""
    a = tensor(a)
    off = _offsets(offsets, a.shape[0])
    counts = np.diff(off)
    out = np.add.reduceat(a.value, off[:-1], axis=0)
    return _emit(out, (a,), lambda g: (np.repeat(g, counts, axis=0),))


def repeat_segments(a, offsets=None, rows: int | None = None) -> Tensor:
    """Inverse layout of ``segment_sum``: row ``i`` repeated over segment ``i``."""
    a = tensor(a)
    if offsets is None:
        if rows is None:
            raise InvalidParameter("repeat_segments needs offsets or rows")
        offsets = [0, rows]
    off = np.asarray(offsets, dtype=np.int64)
    counts = np.diff(off)
    if counts.size != a.shape[0]:
        raise ShapeMismatch(f"{counts.size} segments for {a.shape[0]} rows")
    out = np.repeat(a.value, counts, axis=0)
    return _emit(out, (a,), lambda g: (np.add.reduceat(g, off[:-1], axis=0),))


def _outer(a, b):
    # (n, k, j), (n, l, j) -> (k, l, j) as a batch of matmuls over j; contiguous
    # operands let matmul hand each slice to BLAS
    at = np.ascontiguousarray(a.transpose(2, 1, 0))
    bt = np.ascontiguousarray(b.transpose(2, 0, 1))
    return np.matmul(at, bt).transpose(1, 2, 0)


def _apply(q, m):
    # (n, k, j), (k, l, j) -> (n, l, j)
    qt = np.ascontiguousarray(q.transpose(2, 0, 1))
    mt = np.ascontiguousarray(m.transpose(2, 0, 1))
    return np.matmul(qt, mt).transpose(1, 2, 0)


def segment_outer(a, b, offsets=None) -> Tensor:
    """``M[s, k, l, j] = sum_{n in segment s} a[n, k, j] * b[n, l, j]``."""
    a, b = tensor(a), tensor(b)
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ShapeMismatch(f"segment_outer: incompatible {a.shape} and {b.shape}")
    off = _offsets(offsets, a.shape[0])
    av, bv = a.value, b.value
    out = np.stack([_outer(av[s:e], bv[s:e]) for s, e in zip(off[:-1], off[1:])])

    def backward(g):
        ga = np.empty_like(av)
        gb = np.empty_like(bv)
        for i, (s, e) in enumerate(zip(off[:-1], off[1:])):
            ga[s:e] = _apply(bv[s:e], g[i].transpose(1, 0, 2))
            gb[s:e] = _apply(av[s:e], g[i])
        return ga, gb

    return _emit(out, (a, b), backward)


def segment_contract(q, m, offsets=None) -> Tensor:
    """``out[n, l, j] = sum_k q[n, k, j] * m[seg(n), k, l, j]``."""
    q, m = tensor(q), tensor(m)
    off = _offsets(offsets, q.shape[0])
    if m.ndim != 4 or m.shape[0] != off.size - 1 or m.shape[1] != q.shape[1] or m.shape[3] != q.shape[2]:
        raise ShapeMismatch(f"segment_contract: incompatible {q.shape} and {m.shape}")
    qv, mv = q.value, m.value
    out = np.concatenate([_apply(qv[s:e], mv[i]) for i, (s, e) in enumerate(zip(off[:-1], off[1:]))])

    def backward(g):
        gq = np.empty_like(qv)
        gm = np.empty_like(mv)
        for i, (s, e) in enumerate(zip(off[:-1], off[1:])):
            gq[s:e] = _apply(g[s:e], mv[i].transpose(1, 0, 2))
            gm[i] = _outer(qv[s:e], g[s:e])
        return gq, gm

    return _emit(out, (q, m), backward)


def segment_gram(p, y, offsets=None) -> Tensor:
    """``out[s, k, j] = sum_{n in segment s} p[n, k] * y[n, j]``."""
    p, y = tensor(p), tensor(y)
    if p.ndim != 2 or y.ndim != 2 or p.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"segment_gram: incompatible {p.shape} and {y.shape}")
    off = _offsets(offsets, p.shape[0])
    pv, yv = p.value, y.value
    spans = list(zip(off[:-1], off[1:]))
    out = np.stack([pv[s:e].T @ yv[s:e] for s, e in spans])

    def backward(g):
        gp = np.empty_like(pv)
        gy = np.empty_like(yv)
        for i, (s, e) in enumerate(spans):
            gp[s:e] = yv[s:e] @ g[i].T
            gy[s:e] = pv[s:e] @ g[i]
        return gp, gy

    return _emit(out, (p, y), backward)


def segment_apply(p, m, offsets=None) -> Tensor:
    """``out[n, j] = sum_k p[n, k] * m[seg(n), k, j]``."""
    p, m = tensor(p), tensor(m)
    off = _offsets(offsets, p.shape[0])
    if p.ndim != 2 or m.ndim != 3 or m.shape[0] != off.size - 1 or m.shape[1] != p.shape[1]:
        raise ShapeMismatch(f"segment_apply: incompatible {p.shape} and {m.shape}")
    pv, mv = p.value, m.value
    spans = list(zip(off[:-1], off[1:]))
    out = np.concatenate([pv[s:e] @ mv[i] for i, (s, e) in enumerate(spans)])

    def backward(g):
        gp = np.empty_like(pv)
        gm = np.empty_like(mv)
        for i, (s, e) in enumerate(spans):
            gp[s:e] = g[s:e] @ mv[i].T
            gm[i] = pv[s:e].T @ g[s:e]
        return gp, gm

    return _emit(out, (p, m), backward)


def pair_contract(a, b) -> Tensor:
    """``out[g, k, q, j] = sum_l a[g, k, l, j] * b[g, q, l, j]``."""
    a, b = tensor(a), tensor(b)
    if a.ndim != 4 or a.shape != b.shape:
        raise ShapeMismatch(f"pair_contract: incompatible {a.shape} and {b.shape}")
    at = np.ascontiguousarray(a.value.transpose(0, 3, 1, 2))  # (G, j, k, l)
    bt = np.ascontiguousarray(b.value.transpose(0, 3, 1, 2))
    out = np.matmul(at, bt.transpose(0, 1, 3, 2)).transpose(0, 2, 3, 1)

    def backward(g):
        gt = np.ascontiguousarray(g.transpose(0, 3, 1, 2))  # (G, j, k, q)
        ga = np.matmul(gt, bt).transpose(0, 2, 3, 1)
        gb = np.matmul(gt.transpose(0, 1, 3, 2), at).transpose(0, 2, 3, 1)
        return ga, gb

    return _emit(np.ascontiguousarray(out), (a, b), backward)


def finite_diff_check(f, params: dict, eps: float = 1e-6, samples: int = 64, seed: int = 0) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` maps a dict of tensors to a scalar tensor.  ``samples`` coordinates
    are drawn uniformly over all parameters; the relative error uses the
    denominator ``max(|analytic|, |numeric|, 1e-12)``.
    """
    if not 1e-7 <= eps <= 1e-4:
        raise InvalidParameter(f"eps must lie in [1e-7, 1e-4], got {eps}")
    base = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    with Tape() as tape:
        leaves = {k: tape.watch(v) for k, v in base.items()}
        loss = f(leaves)
    analytic = tape.grad(loss, leaves)

    names = sorted(base)
    sizes = np.array([base[k].size for k in names])
    rng = np.random.default_rng(seed)
    flat_idx = rng.choice(int(sizes.sum()), size=min(samples, int(sizes.sum())), replace=False)
    bounds = np.cumsum(sizes)
    worst = 0.0
    for fi in flat_idx:
        which = int(np.searchsorted(bounds, fi, side="right"))
        name = names[which]
        local = int(fi - (bounds[which - 1] if which else 0))
        arr = base[name].reshape(-1)
        orig = arr[local]
        arr[local] = orig + eps
        up = value_of(f({k: Tensor(v) for k, v in base.items()})).item()
        arr[local] = orig - eps
        down = value_of(f({k: Tensor(v) for k, v in base.items()})).item()
        arr[local] = orig
        numeric = (up - down) / (2 * eps)
        exact = float(analytic[name].reshape(-1)[local])
        err = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-12)
        worst = max(worst, err)
    return worst


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(params, grads, state: AdamState | None, lr=1e-3, beta1=0.9, beta2=0.999,
              eps=1e-8, weight_decay=0.0):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``.

    ``weight_decay`` is decoupled (AdamW-style) and defaults to off.
    """
    if state is None:
        state = AdamState.zeros_like(params)
    t = state.t + 1
    new_params, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient for {k!r} has shape {g.shape}, parameter {p.shape}")
        m = beta1 * state.m[k] + (1 - beta1) * g
        v = beta2 * state.v[k] + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        step = lr * m_hat / (np.sqrt(v_hat) + eps)
        if weight_decay:
            step = step + lr * weight_decay * p
        new_params[k] = p - step
        new_m[k], new_v[k] = m, v
    return new_params, AdamState(new_m, new_v, t)
