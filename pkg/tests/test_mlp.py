"""Network plumbing: exact gradients, Adam trace, soft updates."""
import math

import numpy as np
import pytest

from loopsim.mlp import Adam, Mlp, numeric_gradient, soft_update


def _loss_through(net, x, w):
    """Scalar loss sum(out * w) as a function of the flat parameter vector."""
    def f(vec):
        saved = net.flat()
        net.set_flat(vec)
        out = net(x)
        net.set_flat(saved)
        return float(np.sum(out * w))
    return f


# -- gradient checks ---------------------------------------------------------------

def test_parameter_gradients_match_finite_differences(rng):
    net = Mlp([3, 8, 8, 2], rng)
    x = rng.uniform(-1, 1, size=(5, 3))
    w = rng.uniform(-1, 1, size=(5, 2))
    out, acts = net.forward(x)
    grads, _ = net.backward(acts, w)
    flat_grad = np.concatenate([g.ravel() for g in grads])
    fd = numeric_gradient(_loss_through(net, x, w), net.flat())
    assert float(np.max(np.abs(flat_grad - fd))) < 1e-6


def test_input_gradients_match_finite_differences(rng):
    net = Mlp([4, 10, 3], rng)
    x0 = rng.uniform(-1, 1, size=4)
    w = rng.uniform(-1, 1, size=3)

    def f(x):
        return float(np.sum(net(x) * w))

    _, acts = net.forward(x0)
    _, gx = net.backward(acts, w.reshape(1, -1))
    fd = numeric_gradient(f, x0)
    assert float(np.max(np.abs(gx[0] - fd))) < 1e-6


def test_batch_gradient_is_sum_of_rows(rng):
    net = Mlp([3, 6, 2], rng)
    xs = rng.uniform(-1, 1, size=(4, 3))
    gy = rng.uniform(-1, 1, size=(4, 2))
    _, acts = net.forward(xs)
    grads, _ = net.backward(acts, gy)
    singles = []
    for i in range(4):
        _, a1 = net.forward(xs[i])
        g1, _ = net.backward(a1, gy[i:i + 1])
        singles.append(g1)
    for j, g in enumerate(grads):
        total = sum(s[j] for s in singles)
        assert np.allclose(g, total, atol=1e-12)


# -- shapes / init -------------------------------------------------------------------

def test_forward_promotes_1d_input(rng):
    net = Mlp([3, 5, 2], rng)
    out = net(np.zeros(3))
    assert out.shape == (1, 2)
    out = net(np.zeros((7, 3)))
    assert out.shape == (7, 2)


def test_init_ranges_and_zero_bias(rng):
    net = Mlp([10, 20, 4], rng)
    for W, (nin, nout) in zip(net.weights, [(10, 20), (20, 4)]):
        bound = math.sqrt(6.0 / (nin + nout))
        assert float(np.max(np.abs(W))) <= bound
        assert float(np.std(W)) > 0.1 * bound  # actually randomized
    for b in net.biases:
        assert np.all(b == 0.0)


def test_requires_two_sizes(rng):
    with pytest.raises(ValueError, match="input and output"):
        Mlp([4], rng)


def test_flat_round_trip(rng):
    net = Mlp([3, 6, 2], rng)
    vec = net.flat()
    out0 = net(np.ones(3)).copy()
    net.set_flat(np.zeros_like(vec))
    assert np.all(net(np.ones(3)) == 0.0)
    net.set_flat(vec)
    assert np.allclose(net(np.ones(3)), out0)
    with pytest.raises(ValueError, match="set_flat"):
        net.set_flat(vec[:-1])


def test_copy_is_independent(rng):
    net = Mlp([3, 4, 2], rng)
    clone = net.copy()
    assert np.array_equal(net.flat(), clone.flat())
    clone.weights[0][0, 0] += 1.0
    assert net.weights[0][0, 0] != clone.weights[0][0, 0]


# -- Adam ------------------------------------------------------------------------------

def test_adam_three_step_hand_trace():
    """Two scalar parameters with constant gradients (1, -2), lr=0.1."""
    p = [np.array([0.0]), np.array([0.0])]
    opt = Adam(p, lr=0.1)
    g = [np.array([1.0]), np.array([-2.0])]
    b1, b2, eps = 0.9, 0.999, 1e-8
    m = [0.0, 0.0]
    v = [0.0, 0.0]
    expect = [0.0, 0.0]
    for t in range(1, 4):
        opt.step(g)
        for i, gi in enumerate((1.0, -2.0)):
            m[i] = b1 * m[i] + (1 - b1) * gi
            v[i] = b2 * v[i] + (1 - b2) * gi * gi
            mhat = m[i] / (1 - b1 ** t)
            vhat = v[i] / (1 - b2 ** t)
            expect[i] -= 0.1 * mhat / (math.sqrt(vhat) + eps)
        assert p[0][0] == pytest.approx(expect[0], abs=1e-15)
        assert p[1][0] == pytest.approx(expect[1], abs=1e-15)
    # constant gradient: first step is almost exactly -lr * sign(g)
    assert abs(abs(expect[0]) - 0.3) < 0.01


def test_adam_descends_quadratic():
    p = [np.array([5.0])]
    opt = Adam(p, lr=0.05)
    for _ in range(2000):
        opt.step([2.0 * p[0]])
    assert abs(p[0][0]) < 1e-3


# -- soft updates -----------------------------------------------------------------------

def test_soft_update_endpoints(rng):
    src = Mlp([3, 4, 2], rng)
    tgt = Mlp([3, 4, 2], rng)
    before = tgt.flat().copy()
    soft_update(tgt, src, 0.0)
    assert np.array_equal(tgt.flat(), before)
    soft_update(tgt, src, 1.0)
    assert np.array_equal(tgt.flat(), src.flat())


def test_soft_update_repeated_decay(rng):
    src = Mlp([2, 3, 1], rng)
    tgt = src.copy()
    delta = rng.uniform(-1, 1, size=tgt.flat().size)
    tgt.set_flat(src.flat() + delta)
    tau = 0.005
    for _ in range(1000):
        soft_update(tgt, src, tau)
    want = src.flat() + delta * (1.0 - tau) ** 1000
    assert np.allclose(tgt.flat(), want, rtol=1e-9, atol=1e-12)
