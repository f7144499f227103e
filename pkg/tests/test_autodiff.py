import numpy as np
import pytest

from gssc.autodiff import (
    AdamState,
    Tape,
    Tensor,
    adam_step,
    add,
    broadcast_to,
    concat,
    exp,
    finite_diff_check,
    gelu,
    inner_over_axis,
    layer_norm,
    matmul,
    mean,
    mul,
    pair_contract,
    reduce_sum,
    relu,
    repeat_segments,
    reshape,
    scatter_add,
    segment_apply,
    segment_contract,
    segment_gram,
    segment_outer,
    segment_sum,
    take,
)
from gssc.errors import InvalidParameter, NotScalar, ShapeMismatch, TapeConsumed

OFF = np.array([0, 3, 7])


def test_square_gradient():
    with Tape() as tape:
        w = tape.watch(np.array(3.0))
        loss = mul(w, w)
    (g,) = tape.grad(loss, [w])
    assert g == pytest.approx(6.0)


def test_quadratic_fd_error():
    err = finite_diff_check(lambda p: reduce_sum(mul(p["w"], p["w"])), {"w": np.array([3.0])}, eps=1e-5)
    assert err < 1e-9


def test_tape_is_single_use():
    with Tape() as tape:
        w = tape.watch(np.ones(2))
        loss = reduce_sum(w)
    tape.grad(loss, [w])
    with pytest.raises(TapeConsumed):
        tape.grad(loss, [w])


def test_loss_must_be_scalar():
    with Tape() as tape:
        w = tape.watch(np.ones(2))
    with pytest.raises(NotScalar):
        tape.grad(w, [w])


def test_unused_leaf_gets_zero():
    with Tape() as tape:
        a = tape.watch(np.ones(3))
        b = tape.watch(np.ones(2))
        loss = reduce_sum(a)
    assert np.array_equal(tape.grad(loss, {"b": b})["b"], np.zeros(2))


def test_no_implicit_broadcast():
    with pytest.raises(ShapeMismatch):
        add(np.ones(3), np.ones((2, 3)))


def test_fd_eps_range():
    with pytest.raises(InvalidParameter):
        finite_diff_check(lambda p: reduce_sum(p["w"]), {"w": np.ones(1)}, eps=1e-3)


CASES = {
    "matmul": (lambda p: matmul(p["a"], p["b"]), {"a": (2, 3, 4), "b": (4, 5)}),
    "broadcast": (lambda p: broadcast_to(p["a"], (3, 4)), {"a": (1, 4)}),
    "mean": (lambda p: mean(p["a"], axis=0), {"a": (3, 4)}),
    "inner": (lambda p: inner_over_axis(p["a"], p["b"], axis=1), {"a": (3, 4, 2), "b": (3, 4, 2)}),
    "exp": (lambda p: exp(p["a"]), {"a": (5,)}),
    "gelu": (lambda p: gelu(p["a"]), {"a": (6,)}),
    "relu": (lambda p: relu(add(p["a"], np.full(6, 0.05))), {"a": (6,)}),
    "layer_norm": (lambda p: layer_norm(p["a"]), {"a": (3, 5)}),
    "reshape_concat": (lambda p: concat([reshape(p["a"], (2, 3)), p["b"]], axis=1), {"a": (6,), "b": (2, 2)}),
    "take_scatter": (lambda p: scatter_add(take(p["a"], np.array([0, 2, 2, 1])), np.array([1, 0, 1, 1]), 3),
                     {"a": (3, 2)}),
    "segment_sum": (lambda p: repeat_segments(segment_sum(p["a"], OFF), OFF), {"a": (7, 2)}),
    "segment_outer": (lambda p: segment_outer(p["a"], p["b"], OFF), {"a": (7, 2, 3), "b": (7, 4, 3)}),
    "segment_contract": (lambda p: segment_contract(p["a"], p["m"], OFF), {"a": (7, 2, 3), "m": (2, 2, 4, 3)}),
    "segment_gram": (lambda p: segment_gram(p["a"], p["b"], OFF), {"a": (7, 3), "b": (7, 2)}),
    "segment_apply": (lambda p: segment_apply(p["a"], p["m"], OFF), {"a": (7, 3), "m": (2, 3, 2)}),
    "pair_contract": (lambda p: pair_contract(p["a"], p["b"]), {"a": (2, 3, 4, 2), "b": (2, 3, 4, 2)}),
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_primitive_gradients(name):
    fn, shapes = CASES[name]
    rng = np.random.default_rng(len(name))
    params = {k: rng.normal(size=s) for k, s in shapes.items()}
    weights = {}

    def loss(p):
        out = fn(p)
        if "w" not in weights:
            weights["w"] = rng.normal(size=out.shape)
        return reduce_sum(mul(out, weights["w"]))

    assert finite_diff_check(loss, params, eps=1e-5) < 1e-6


def test_segment_outer_reference():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(7, 2, 3)), rng.normal(size=(7, 4, 3))
    out = segment_outer(a, b, OFF).value
    for s, (lo, hi) in enumerate(zip(OFF[:-1], OFF[1:])):
        assert np.allclose(out[s], np.einsum("nkj,nlj->klj", a[lo:hi], b[lo:hi]))


def test_adam_first_step_moves_by_lr():
    params = {"w": np.array([1.0, -2.0])}
    new, state = adam_step(params, {"w": np.array([0.5, -3.0])}, None, lr=0.1)
    assert np.allclose(new["w"], [0.9, -1.9])
    assert isinstance(state, AdamState) and state.t == 1


def test_adam_minimizes_quadratic():
    params, state = {"w": np.array([5.0, -4.0])}, None
    for _ in range(2000):
        params, state = adam_step(params, {"w": 2 * params["w"]}, state, lr=0.05)
    assert np.abs(params["w"]).max() < 1e-3


def test_operations_outside_tape_are_plain():
    out = add(Tensor(np.ones(2)), np.ones(2))
    assert out.tape is None and np.array_equal(out.value, [2.0, 2.0])
