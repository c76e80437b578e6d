"""Primitive-level checks for the reverse-mode engine, including the
central finite-difference oracle every differentiable op must match."""

import numpy as np
import pytest

from vfuncta import tensor as tg
from vfuncta.errors import ContractError, NonFiniteError, ShapeError
from vfuncta.tensor import Tensor, backward


def finite_diff(f, arrays, step=1e-4):
    """Central finite differences of a scalar function of float64 arrays."""
    grads = []
    for i, base in enumerate(arrays):
        g = np.zeros_like(base)
        flat = g.reshape(-1)
        for j in range(base.size):
            bumped = [a.copy() for a in arrays]
            bumped[i].reshape(-1)[j] += step
            hi = f(bumped)
            bumped[i].reshape(-1)[j] -= 2 * step
            lo = f(bumped)
            flat[j] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


def rel_err(a, b):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return np.max(np.abs(a - b) / denom)


# --- hand-checked forward values ---------------------------------------------

def test_matmul_identity():
    eye = Tensor(np.eye(2))
    col = Tensor([[3.0], [4.0]])
    out = tg.matmul(eye, col)
    assert np.array_equal(out.data, [[3.0], [4.0]])


def test_matmul_hand_case():
    out = tg.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]]))
    assert np.array_equal(out.data, [[17.0], [39.0]])


def test_matmul_zero_annihilates():
    out = tg.matmul(tg.zeros((2, 3)), Tensor(np.random.default_rng(0).normal(size=(3, 1))))
    assert np.array_equal(out.data, np.zeros((2, 1)))


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 1\)"):
        tg.matmul(tg.zeros((2, 3)), tg.zeros((2, 1)))


def test_sine_act_zero():
    out = tg.sine_act(tg.zeros((4,)), 30.0)
    assert np.array_equal(out.data, np.zeros(4))


def test_sine_act_reaches_one():
    omega0 = 30.0
    x = Tensor(np.array([np.pi / 2 / omega0]))
    assert tg.sine_act(x, omega0).item() == pytest.approx(1.0, abs=1e-6)


def test_sine_act_gradient_at_zero_is_omega0():
    omega0 = 17.5
    x = Tensor(np.zeros(3, dtype=np.float64))
    loss = tg.total_sum(tg.sine_act(x, omega0))
    g = backward(loss, [x])[x]
    assert np.allclose(g.data, omega0, atol=1e-6)


def test_sum_gradient_is_ones():
    w = Tensor(np.array([1.0, -2.0, 3.5]))
    g = backward(tg.total_sum(w), [w])[w]
    assert np.array_equal(g.data, np.ones(3))


def test_mean_squared_error_gradient_hand_case():
    # loss = mean((w - t)^2), w = [1, 2], t = [0, 0]: grad = 2(w - t)/N = [1, 2]
    w = Tensor(np.array([1.0, 2.0]))
    t = Tensor(np.zeros(2))
    loss = tg.mean(tg.squared_error(w, t))
    g = backward(loss, [w])[w]
    assert np.allclose(g.data, [1.0, 2.0], atol=1e-12)


def test_group_mean_values():
    x = Tensor(np.array([1.0, 3.0, 5.0, 7.0]))
    out = tg.group_mean(x, 2)
    assert np.array_equal(out.data, [2.0, 6.0])


def test_add_blocks_values():
    x = Tensor(np.zeros((4, 2)))
    rows = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    out = tg.add_blocks(x, rows, 2)
    assert np.array_equal(out.data, [[1, 2], [1, 2], [3, 4], [3, 4]])


# --- finite-difference oracle over every primitive ----------------------------

def _primitive_cases(rng):
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    c = rng.normal(size=(3, 4))
    row = rng.normal(size=(4,))
    blocks = rng.normal(size=(3, 4))  # block size 2 against x of 6 rows
    x6 = rng.normal(size=(6, 4))
    v12 = rng.normal(size=(12,))
    zeros12 = Tensor(np.zeros(12))
    return [
        ("matmul", [a, b], lambda ts: tg.mean(tg.matmul(ts[0], ts[1]))),
        ("add", [a, c], lambda ts: tg.mean(tg.sine_act(tg.add(ts[0], ts[1]), 1.3))),
        ("add_row", [a, row], lambda ts: tg.mean(tg.sine_act(tg.add_row(ts[0], ts[1]), 1.3))),
        ("add_blocks", [x6, blocks],
         lambda ts: tg.mean(tg.sine_act(tg.add_blocks(ts[0], ts[1], 2), 1.7))),
        ("sine_act", [a], lambda ts: tg.mean(tg.sine_act(ts[0], 3.0))),
        ("scale", [a], lambda ts: tg.mean(tg.sine_act(tg.scale(ts[0], -2.5), 0.7))),
        ("mean", [v12], lambda ts: tg.mean(tg.squared_error(ts[0], zeros12))),
        ("total_sum", [a], lambda ts: tg.total_sum(tg.sine_act(ts[0], 0.9))),
        ("group_mean", [v12], lambda ts: tg.mean(tg.sine_act(tg.group_mean(ts[0], 3), 2.0))),
        ("squared_error", [a, c], lambda ts: tg.mean(tg.squared_error(ts[0], ts[1]))),
        ("reshape", [a], lambda ts: tg.mean(tg.sine_act(tg.reshape(ts[0], (12,)), 1.1))),
    ]


def test_every_primitive_matches_finite_differences():
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        for name, arrays, build in _primitive_cases(rng):
            leaves = [Tensor(x) for x in arrays]
            grads = backward(build(leaves), leaves)
            numeric = finite_diff(lambda p: build([Tensor(q) for q in p]).item(), arrays)
            for leaf, gn in zip(leaves, numeric):
                err = rel_err(grads[leaf].data, gn)
                worst = max(worst, err)
                assert err < 1e-4, f"{name} seed {seed}: rel err {err}"
    assert worst < 1e-4


def test_gradients_are_deterministic():
    rng = np.random.default_rng(42)
    a = Tensor(rng.normal(size=(5, 5)))
    b = Tensor(rng.normal(size=(5, 5)))

    def run():
        loss = tg.mean(tg.squared_error(tg.sine_act(tg.matmul(a, b), 2.0), tg.zeros((5, 5), dtype=np.float64)))
        g = backward(loss, [a, b])
        return g[a].data.copy(), g[b].data.copy()

    ga1, gb1 = run()
    ga2, gb2 = run()
    assert np.array_equal(ga1, ga2) and np.array_equal(gb1, gb2)


def test_unused_parameter_gets_exact_zeros():
    a = Tensor(np.ones((2, 2)))
    unused = Tensor(np.ones((3,)))
    loss = tg.mean(a)
    g = backward(loss, [a, unused])
    assert np.array_equal(g[unused].data, np.zeros(3))
    assert g[unused].data.dtype == unused.data.dtype


def test_shared_subexpression_accumulates():
    # y = mean(x + x): dy/dx = 2/size
    x = Tensor(np.ones(4))
    loss = tg.mean(tg.add(x, x))
    g = backward(loss, [x])[x]
    assert np.allclose(g.data, 0.5)


def test_non_scalar_loss_rejected():
    with pytest.raises(ContractError):
        backward(Tensor(np.ones(2)), [Tensor(np.ones(2))])


def test_non_finite_input_rejected():
    with pytest.raises(NonFiniteError):
        Tensor(np.array([1.0, np.inf]))


def test_overflow_is_reported_with_op_name():
    big = Tensor(np.full((2, 2), 1e300))
    with np.errstate(over="ignore"), pytest.raises(NonFiniteError) as exc:
        tg.matmul(big, big)
    assert exc.value.op == "matmul"


def test_gradient_dtype_follows_input_dtype():
    x32 = Tensor(np.ones(3, dtype=np.float32))
    g = backward(tg.mean(tg.squared_error(x32, tg.zeros(3))), [x32])[x32]
    assert g.data.dtype == np.float32
