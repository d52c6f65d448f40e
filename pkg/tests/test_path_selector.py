import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from espl import autodiff as ad
from espl import path_selector as ps


def test_eval_mask_extremes():
    rng = np.random.default_rng(0)
    assert not ps.sample_mask_eval(np.zeros(50), rng).any()
    assert ps.sample_mask_eval(np.ones(50), rng).all()


def test_eval_mask_mean_monte_carlo():
    rng = np.random.default_rng(1)
    m = ps.sample_mask_eval(np.full(100_000, 0.5), rng)
    assert abs(m.mean() - 0.5) < 0.01


def test_expected_l0_matches_sum_p():
    rng = np.random.default_rng(2)
    p = rng.uniform(0, 1, size=40)
    draws = np.array([ps.sample_mask_eval(p, rng).sum() for _ in range(100_000 // 40 * 4)])
    se = np.sqrt(np.sum(p * (1 - p)) / draws.size)
    assert abs(draws.mean() - p.sum()) < 3 * se


def test_train_mask_equal_noise_half():
    p = ad.leaf(np.array([0.5]))
    gs = ps.relaxed_mask(p, 1.0, np.zeros(1))
    assert gs.value[0] == pytest.approx(0.5)
    assert ps.sample_mask_train(p, 1.0, noise=np.zeros(1)).value[0] == 1.0


def test_train_mask_logit_identity():
    p = ad.constant(np.array([0.9]))
    assert ps.relaxed_mask(p, 1.0, np.zeros(1)).value[0] == pytest.approx(0.9)
    tau = 0.3
    expected = 1 / (1 + np.exp(-np.log(9.0) / tau))
    assert ps.relaxed_mask(p, tau, np.zeros(1)).value[0] == pytest.approx(expected)
    assert ps.sample_mask_train(p, tau, noise=np.zeros(1)).value[0] == 1.0


def test_straight_through_gradient_half():
    p = ad.leaf(np.array([0.5]))
    with ad.Tape() as tape:
        m = ps.sample_mask_train(p, 1.0, noise=np.zeros(1))
        out = ad.sum(m)
    (g,) = tape.backward(out, [p])
    h = 1e-6
    fd = (ps.relaxed_mask(ad.constant(np.array([0.5 + h])), 1.0, np.zeros(1)).value
          - ps.relaxed_mask(ad.constant(np.array([0.5 - h])), 1.0, np.zeros(1)).value) / (2 * h)
    assert g[0] == pytest.approx(1.0, rel=1e-6)
    assert g[0] == pytest.approx(fd[0], rel=1e-6)


def test_tau_must_be_positive():
    with pytest.raises(ValueError):
        ps.sample_mask_train(ad.constant(np.array([0.5])), 0.0, noise=np.zeros(1))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 1.0))
def test_train_mask_binary(seed, tau):
    rng = np.random.default_rng(seed)
    p = rng.uniform(0, 1, size=64)
    m = ps.sample_mask_train(ad.constant(p), tau, rng).value
    assert set(np.unique(m)) <= {0.0, 1.0}


def test_saturated_train_mask_matches_eval():
    rng = np.random.default_rng(3)
    for value in (0.001, 0.999):
        p = np.full(100_000, value)
        train = ps.sample_mask_train(ad.constant(p), 0.2, rng).value
        expected = float(value > 0.5)
        assert np.mean(train == expected) >= 1 - 1e-3


def test_select_loss_hinge():
    p = ad.leaf(np.full(20, 0.5))
    assert ps.select_loss(p, 4.0).value == pytest.approx(6.0)
    with ad.Tape() as tape:
        out = ps.select_loss(p, 12.0)
    assert out.value == 0.0
    np.testing.assert_array_equal(tape.backward(out, [p])[0], np.zeros(20))


def test_select_loss_touches_only_p():
    w = ad.leaf(np.ones(3))
    p = ad.leaf(np.full(3, 0.9))
    with ad.Tape() as tape:
        out = ps.select_loss(p, 1.0) + 0.0 * ad.sum(w)
    gw, gp = tape.backward(out, [w, p])
    assert not gw.any() and np.allclose(gp, 1.0)


def test_schedule_points():
    P, lt = 500, 0.002
    assert ps.schedule(0, 400, 0.2, lt, P) == (1.0, float(P))
    assert ps.schedule(400, 400, 0.2, lt, P) == (0.2, lt * P)
    assert ps.schedule(900, 400, 0.2, lt, P) == (0.2, lt * P)
    tau, lmin = ps.schedule(200, 400, 0.2, lt, P)
    assert tau == pytest.approx(0.6)
    assert lmin == pytest.approx((lt + 0.25 * (1 - lt)) * P)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 500), st.floats(0.0001, 1.0))
def test_schedule_monotone(t_s, lt):
    vals = [ps.schedule(t, t_s, 0.2, lt, 100) for t in range(0, t_s + 5)]
    taus, lmins = zip(*vals)
    assert all(a >= b for a, b in zip(lmins, lmins[1:]))
    assert all(0 < t <= 1 for t in taus)


def test_uncertainty():
    assert ps.uncertainty(np.array([0.0, 1.0, 1.0])) == 0.5
    assert ps.uncertainty(np.full(4, 0.5)) == 0.0


def test_selector_state_clips():
    s = ps.SelectorState.create(5, 0.95, schedule_iters=10, target_temperature=0.2, target_l0_ratio=0.002)
    s.p.value = np.array([-0.2, 0.3, 1.4, 0.5, 1.0])
    s.clip()
    assert s.p.value.min() >= 0 and s.p.value.max() <= 1
