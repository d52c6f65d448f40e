import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from espl import autodiff as ad

finite = st.floats(-3.0, 3.0, allow_nan=False)


def test_add_elementwise():
    out = ad.add(ad.constant([1.0, 2.0]), ad.constant([3.0, 4.0]))
    np.testing.assert_array_equal(out.value, [4.0, 6.0])


def test_shape_mismatch_names_op():
    with pytest.raises(ad.ShapeError) as info:
        ad.add(ad.constant(np.ones(2)), ad.constant(np.ones(3)))
    assert "add" in str(info.value)


def test_indicator_inclusive_with_zero_gradient():
    x = ad.leaf(np.array([0.5, 0.4]))
    with ad.Tape() as tape:
        y = ad.sum(ad.indicator_ge(x, 0.5) * 3.0 + x)
    (g,) = tape.backward(y, [x])
    np.testing.assert_array_equal(ad.indicator_ge(ad.constant(0.5)).value, 1.0)
    np.testing.assert_array_equal(g, [1.0, 1.0])


def test_product_and_sin_rules():
    x, y = ad.leaf(3.0), ad.leaf(5.0)
    with ad.Tape() as tape:
        out = x * y
    gx, gy = tape.backward(out, [x, y])
    assert gx == 5.0 and gy == 3.0
    z = ad.leaf(0.0)
    with ad.Tape() as tape:
        out = ad.sin(z)
    assert tape.backward(out, [z])[0] == 1.0


def test_backward_requires_scalar():
    x = ad.leaf(np.ones(3))
    with ad.Tape() as tape:
        y = x * 2.0
    with pytest.raises(ad.ShapeError):
        tape.backward(y, [x])


def test_grad_check_quadratic():
    assert ad.grad_check(lambda x: ad.sum(ad.square(x)), np.array([2.0]), h=1e-5) < 1e-6


def test_grad_check_reports_nonfinite():
    with pytest.raises(ad.NonFiniteError, match="index 0"), np.errstate(divide="ignore"):
        ad.grad_check(lambda x: ad.sum(ad.log(x)), np.array([0.0]))


def test_grad_check_rejects_bad_step():
    with pytest.raises(ValueError):
        ad.grad_check(lambda x: ad.sum(x), np.ones(2), h=0.0)


UNARY = {
    "sin": ad.sin, "cos": ad.cos, "exp": ad.exp, "tanh": ad.tanh, "sigmoid": ad.sigmoid,
    "softplus": ad.softplus, "square": ad.square,
    "log": lambda x: ad.log(ad.square(x) + 0.5),
    "sqrt": lambda x: ad.sqrt(ad.square(x) + 0.5),
    "relu": ad.relu,
    "clamp": lambda x: ad.clamp(x, -1.0, 1.0),
    "neg": ad.negate,
}
KINKS = {"relu": [0.0], "clamp": [-1.0, 1.0]}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_primitives_match_fd(name):
    rng = np.random.default_rng(hash(name) % 2**32)
    h = 1e-6
    pts = rng.uniform(-3, 3, size=100)
    keep = np.ones(100, bool)
    for k in KINKS.get(name, []):
        keep &= np.abs(pts - k) > 10 * h
    err = ad.grad_check(lambda x: ad.sum(UNARY[name](x) * np.linspace(0.5, 1.5, int(keep.sum()))), pts[keep], h=h)
    assert err < 1e-4


BINARY = {
    "add": ad.add, "sub": ad.sub, "mul": ad.mul,
    "div": lambda a, b: ad.div(a, ad.square(b) + 0.5),
    "minimum": ad.minimum, "maximum": ad.maximum,
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_primitives_match_fd(name):
    rng = np.random.default_rng(len(name))
    a, b = rng.uniform(-3, 3, size=(2, 100))
    if name in ("minimum", "maximum"):
        keep = np.abs(a - b) > 1e-4
        a, b = a[keep], b[keep]
    err = ad.grad_check(lambda x, y: ad.sum(BINARY[name](x, y) * np.cos(np.arange(a.size))), [a, b], h=1e-6)
    assert err < 1e-4


def test_matmul_linear_and_reductions_match_fd():
    rng = np.random.default_rng(1)
    x, w, b = rng.normal(size=(5, 3)), rng.normal(size=(3, 4)), rng.normal(size=(1, 4))

    def f(x, w, b):
        return ad.sum(ad.square(ad.linear(x, w, b))) + ad.mean(ad.matmul(x, w)) + ad.sum(ad.transpose(w), axis=0)[1]

    assert ad.grad_check(f, [x, w, b]) < 1e-4


def test_fused_linear_matches_composite():
    rng = np.random.default_rng(2)
    x, w, b = rng.normal(size=(6, 3)), rng.normal(size=(3, 5)), rng.normal(size=(1, 5))
    grads = []
    for fused in (True, False):
        leaves = [ad.leaf(v) for v in (x, w, b)]
        with ad.Tape() as tape:
            if fused:
                y = ad.linear(*leaves, relu=True)
            else:
                y = ad.relu(ad.add(ad.matmul(leaves[0], leaves[1]), leaves[2]))
            out = ad.sum(y * np.arange(30).reshape(6, 5))
        grads.append(tape.backward(out, leaves))
    for g1, g2 in zip(*grads):
        np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-12)


def test_shape_ops_match_fd():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 6))

    def f(x):
        parts = ad.concat([ad.getitem(x, (slice(None), slice(0, 2))), ad.take(x, [5, 3], axis=1)], axis=1)
        return ad.sum(ad.square(ad.reshape(parts, (-1,)))) + ad.sum(ad.cast(x, np.float64) * 0.3)

    assert ad.grad_check(f, x) < 1e-4


def test_stop_gradient_contributes_zero():
    x = ad.leaf(np.array([1.0, 2.0]))
    with ad.Tape() as tape:
        y = ad.sum(ad.stop_gradient(x) * x + ad.stop_gradient(ad.exp(x)))
    (g,) = tape.backward(y, [x])
    np.testing.assert_array_equal(g, [1.0, 2.0])


def test_backward_deterministic():
    rng = np.random.default_rng(4)
    vals = rng.normal(size=(3, 3))
    results = []
    for _ in range(2):
        x = ad.leaf(vals)
        with ad.Tape() as tape:
            y = ad.sum(ad.tanh(ad.matmul(x, x)) * ad.sin(x))
        results.append(tape.backward(y, [x])[0])
    assert np.array_equal(results[0], results[1])


def test_frozen_operand_gets_no_grad_but_upstream_does():
    w = ad.Node(np.ones((2, 2)))
    x = ad.leaf(np.array([[1.0, 2.0]]))
    with ad.Tape() as tape:
        y = ad.sum(ad.matmul(x, w))
    (gx,) = tape.backward(y, [x])
    np.testing.assert_array_equal(gx, [[2.0, 2.0]])
    assert w.grad is None


def test_clamp_boundary_subgradient():
    x = ad.leaf(np.array([1.0, -1.0, 0.5]))
    with ad.Tape() as tape:
        y = ad.sum(ad.clamp(x, -1.0, 1.0))
    (g,) = tape.backward(y, [x])
    np.testing.assert_array_equal(g, [0.0, 0.0, 1.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=1, max_size=6), st.lists(finite, min_size=1, max_size=6))
def test_grad_shape_matches_value(xs, ys):
    n = min(len(xs), len(ys))
    a, b = ad.leaf(np.array(xs[:n])), ad.leaf(np.array(ys[:n]))
    with ad.Tape() as tape:
        out = ad.sum(a * b + ad.sin(a))
    ga, gb = tape.backward(out, [a, b])
    assert ga.shape == a.value.shape and gb.shape == b.value.shape
    np.testing.assert_allclose(ga, np.array(ys[:n]) + np.cos(xs[:n]))
    np.testing.assert_allclose(gb, xs[:n])
