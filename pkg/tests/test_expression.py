import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from espl import expression as ex
from espl.envs import env_spec
from espl.symbolic_network import STRUCTURES, NetworkConfig, SymbolicNetwork
from espl.symbolic_ops import OperatorKind

BOX = env_spec("cartpole")


def _random_pair(seed, structure="dense-arranged", density=None):
    rng = np.random.default_rng(seed)
    net = SymbolicNetwork(NetworkConfig.default(4, structure), rng)
    for w in net.weights:
        w.value = rng.uniform(-1.5, 1.5, size=w.value.shape)
    for b in net.biases:
        b.value = rng.uniform(-0.5, 0.5, size=b.value.shape)
    density = rng.uniform(0.05, 0.6) if density is None else density
    mask = (rng.uniform(size=net.n_weights) < density).astype(float)
    return net, mask, rng


def _masked_forward(net, mask, states):
    ws = [w.value * m for w, m in zip(net.weights, net.split_mask(mask))]
    return net.forward_values(states, ws)[0]


@pytest.mark.parametrize("structure", STRUCTURES)
def test_extraction_matches_masked_forward(structure):
    for seed in range(40):
        net, mask, rng = _random_pair(seed, structure)
        states = rng.uniform(BOX.box_low, BOX.box_high, size=(100, 4))
        tree = ex.extract(net, mask)
        np.testing.assert_allclose(ex.evaluate(tree, states), _masked_forward(net, mask, states), atol=1e-6)
        simple = ex.simplify(tree)
        np.testing.assert_allclose(ex.evaluate(simple, states), ex.evaluate(tree, states), atol=1e-9)


def test_zero_mask_gives_final_bias():
    net, _, _ = _random_pair(0)
    net.biases[-1].value = np.array([0.37])
    tree = ex.simplify(ex.extract(net, np.zeros(net.n_weights)))
    assert isinstance(tree, ex.Const) and tree.value == pytest.approx(0.37)


def test_simplify_affine_nesting():
    inner = ex.Affine(((3.0, ex.Var(0)),), 1.0)
    tree = ex.simplify(ex.Affine(((2.0, inner),), 4.0))
    assert isinstance(tree, ex.Affine)
    assert tree.bias == pytest.approx(6.0)
    assert len(tree.terms) == 1 and tree.terms[0][0] == pytest.approx(6.0)
    assert isinstance(tree.terms[0][1], ex.Var) and tree.terms[0][1].index == 0


def test_simplify_folds_constants():
    tree = ex.simplify(ex.Binary(OperatorKind.MUL, ex.Const(2.0), ex.Const(3.0)))
    assert isinstance(tree, ex.Const) and tree.value == 6.0
    tree = ex.simplify(ex.Unary(OperatorKind.SIN, ex.Affine((), 0.5)))
    assert isinstance(tree, ex.Const) and tree.value == pytest.approx(np.sin(0.5))


def _leaf_ops(tree):
    out, stack = [], [tree]
    while stack:
        e = stack.pop()
        if isinstance(e, (ex.Unary, ex.Binary, ex.Ternary)):
            out.append(e)
        stack.extend(ex.children(e))
    return out


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_simplified_trees_have_no_constant_operators(seed):
    net, mask, _ = _random_pair(seed)
    tree = ex.simplify(ex.extract(net, mask))
    for node in _leaf_ops(tree):
        kids = ex.children(node)
        assert not all(isinstance(k, ex.Const) for k in kids)


def test_verify_and_strip_cases():
    x = ex.Var(0)
    exp_tree = ex.Unary(OperatorKind.EXP, ex.Affine(((1.5, x),), -0.5))
    stripped, notes = ex.verify_and_strip(exp_tree, [-1.0], [1.0], samples=2000)
    assert not stripped.regularized and "plain" in notes[0]
    div_tree = ex.Binary(OperatorKind.DIV, ex.Const(1.0), ex.Affine(((1.25, x),), 1.75))
    stripped, _ = ex.verify_and_strip(div_tree, [-1.0], [1.0], samples=2000)
    assert not stripped.regularized
    crossing = ex.Binary(OperatorKind.DIV, ex.Const(1.0), x)
    kept, notes = ex.verify_and_strip(crossing, [-1.0], [1.0], samples=2000)
    assert kept.regularized and "kept" in notes[0]


def test_verify_and_strip_preserves_values_on_box():
    for seed in range(20):
        net, mask, rng = _random_pair(seed, density=0.15)
        tree = ex.simplify(ex.extract(net, mask))
        stripped, _ = ex.verify_and_strip(tree, BOX.box_low, BOX.box_high, samples=3000)
        states = rng.uniform(BOX.box_low, BOX.box_high, size=(500, 4))
        np.testing.assert_allclose(ex.evaluate(stripped, states), ex.evaluate(tree, states), rtol=1e-9, atol=1e-9)


def test_length_anchor_rows():
    cartpole = ex.parse_infix("17.17*s3 + 1.2*s4")
    assert ex.metrics([cartpole]).length == 3
    mcar = ex.parse_infix("8.06*sin(9.73*s2 - 0.18) + 1.26")
    assert ex.metrics([mcar]).length == 6
    assert ex.metrics([ex.Const(0.4)]).length == 1


def test_length_averages_action_dims():
    trees = [ex.parse_infix("17.17*s3 + 1.2*s4"), ex.parse_infix("0.5*s1")]
    assert ex.metrics(trees).length == pytest.approx((3 + 1) / 2)


def test_infix_formatting():
    tree = ex.Affine(((17.17, ex.Var(2)), (1.2, ex.Var(3))), 0.0)
    assert ex.to_infix(tree) == "17.17*s3 + 1.2*s4"
    assert ex.to_infix(ex.Const(0.0)) == "0.00"
    assert ex.serialize([ex.Const(0.0)]) == "0.00"


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_roundtrips_preserve_metrics_and_values(seed):
    net, mask, rng = _random_pair(seed, density=0.1)
    tree = ex.simplify(ex.extract(net, mask))
    states = rng.uniform(BOX.box_low, BOX.box_high, size=(50, 4))
    back = ex.parse(ex.serialize([tree], "ast"), "ast")[0]
    np.testing.assert_array_equal(ex.evaluate(back, states), ex.evaluate(tree, states))
    shown = ex.round_constants(tree, 2)
    reparsed = ex.parse(ex.serialize([tree], "infix"), "infix")[0]
    assert ex.metrics([reparsed]).length == ex.metrics([tree]).length
    np.testing.assert_allclose(ex.evaluate(reparsed, states), ex.evaluate(shown, states), atol=1e-9)


def test_policy_report_json_roundtrip():
    rep = ex.metrics([ex.parse_infix("17.17*s3 + 1.2*s4")], {"seed": 1})
    doc = json.loads(json.dumps(rep.to_dict()))
    assert doc["format"] == "espl-policy/1"
    back = ex.PolicyReport.from_dict(doc)
    assert back.infix == rep.infix and back.length == rep.length


def test_affine_coefficients_and_gains():
    tree = ex.parse_infix("17.17*s3 + 1.2*s4 + 0.003")
    gains, offset = ex.affine_coefficients(tree, 4)
    np.testing.assert_allclose(gains, [0, 0, 17.17, 1.2])
    assert offset == pytest.approx(0.003)
    with pytest.raises(ValueError):
        ex.affine_coefficients(ex.parse_infix("sin(s1)"), 4)
    g, b = ex.local_gains(ex.parse_infix("sin(2*s1) + s2"), 4)
    np.testing.assert_allclose(g, [2, 1, 0, 0], atol=1e-6)


def test_expression_policy_tanh():
    pol = ex.ExpressionPolicy([ex.parse_infix("17.17*s3 + 1.2*s4")])
    assert pol(np.array([0, 0, 0.1, 0]))[0] == pytest.approx(np.tanh(1.717))


def test_dense_output_reaches_state_directly():
    net, _, _ = _random_pair(0)
    final = net.weights[-1]
    final.value = np.zeros_like(final.value)
    final.value[0, 2], final.value[0, 3] = 17.17, 1.2
    net.biases[-1].value = np.zeros(1)
    mask = np.zeros(net.n_weights)
    mask[-final.value.size + 2], mask[-final.value.size + 3] = 1.0, 1.0
    tree = ex.simplify(ex.extract(net, mask))
    assert ex.to_infix(tree) == "17.17*s3 + 1.2*s4"
    assert ex.metrics([tree]).length == 3
