import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from steingrad.distributions import (
    CapacityError,
    FactorizedBernoulli,
    FiniteDistribution,
    SampleBatch,
    all_states,
    index_to_state,
    state_index,
)

logit_vectors = hnp.arrays(np.float64, st.integers(1, 8),
                           elements=st.floats(-8, 8, allow_nan=False))


def test_saturated_logits_sample_ones(rng):
    x = FactorizedBernoulli(np.full(5, 50.0)).sample(rng, 100)
    assert x.shape == (100, 5) and np.all(x == 1)


def test_sample_mean_fair_coin():
    x = FactorizedBernoulli([0.0]).sample(np.random.default_rng(7), 10 ** 6)
    assert 0.498 <= x.mean() <= 0.502


def test_sample_deterministic():
    dist = FactorizedBernoulli([0.3, -1.0, 2.0])
    a = dist.sample(np.random.default_rng(3), 50)
    b = dist.sample(np.random.default_rng(3), 50)
    assert np.array_equal(a, b)


def test_sample_rejects_bad_k(rng):
    with pytest.raises(ValueError):
        FactorizedBernoulli([0.0]).sample(rng, 0)


def test_batched_sample_shape(rng):
    x = FactorizedBernoulli(np.zeros((4, 3))).sample(rng, 2)
    assert x.shape == (4, 2, 3)


def test_log_prob_values():
    assert FactorizedBernoulli([0.0, 0.0]).log_prob([1, 0]) == pytest.approx(np.log(0.25), abs=1e-15)
    assert FactorizedBernoulli([2.0]).log_prob([1]) == pytest.approx(-0.12692801104297263, abs=1e-15)


def test_log_prob_stable_at_extremes():
    lp = FactorizedBernoulli([800.0, -800.0]).log_prob([0, 1])
    assert lp == pytest.approx(-1600.0)


def test_log_prob_dim_mismatch():
    with pytest.raises(ValueError):
        FactorizedBernoulli([0.0, 1.0]).log_prob([1.0])


def test_score_fd():
    dist = FactorizedBernoulli([0.0])
    assert dist.score([1.0])[0] == 0.5
    eta, h = np.array([0.4, -1.3, 2.2]), 1e-6
    x = np.array([1.0, 0.0, 1.0])
    fd = [(FactorizedBernoulli(eta + h * e).log_prob(x)
           - FactorizedBernoulli(eta - h * e).log_prob(x)) / (2 * h) for e in np.eye(3)]
    np.testing.assert_allclose(FactorizedBernoulli(eta).score(x), fd, rtol=1e-6)


def test_flip_ratio_examples():
    assert FactorizedBernoulli([0.0]).flip_ratio([0.0], 0) == 1.0
    dist = FactorizedBernoulli([np.log(4.0)])
    assert dist.flip_ratio([0.0], 0) == pytest.approx(4.0, rel=1e-14)
    assert dist.flip_ratio([0.0], 0, eps=1e-3) == pytest.approx(0.8 / 0.201, rel=1e-14)
    assert dist.flip_ratio([0.0], 0, eps=1e-3) == pytest.approx(3.9801, abs=1e-4)
    with pytest.raises(IndexError):
        dist.flip_ratio([0.0], 1)


def test_enumerate_support_order():
    states, p = FactorizedBernoulli([0.0, 0.0]).enumerate_support()
    assert states.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]
    _, p3 = FactorizedBernoulli(np.zeros(3)).enumerate_support()
    assert np.all(p3 == 0.125)


def test_enumerate_support_capacity():
    with pytest.raises(CapacityError):
        all_states(21)


def test_state_index_roundtrip():
    s = all_states(5)
    assert np.array_equal(state_index(s), np.arange(32))
    assert np.array_equal(index_to_state(np.arange(32), 5), s)


@given(logit_vectors)
@settings(max_examples=60, deadline=None)
def test_normalization_and_score_identity(eta):
    dist = FactorizedBernoulli(eta)
    states, p = dist.enumerate_support()
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.abs(p @ dist.score(states)).max() <= 1e-12


@given(logit_vectors, st.data())
@settings(max_examples=60, deadline=None)
def test_flip_ratio_is_joint_ratio(eta, data):
    dist = FactorizedBernoulli(eta)
    d = dist.d
    x = np.array(data.draw(st.lists(st.integers(0, 1), min_size=d, max_size=d)), float)
    i = data.draw(st.integers(0, d - 1))
    y = x.copy()
    y[i] = 1 - y[i]
    qx, qy = np.exp(dist.log_prob(x)), np.exp(dist.log_prob(y))
    assert abs(dist.flip_ratio(x, i) * qx - qy) <= 1e-12


@given(logit_vectors)
@settings(max_examples=40, deadline=None)
def test_score_entries_strictly_inside_unit_interval(eta):
    eta = np.clip(eta, -30, 30)
    dist = FactorizedBernoulli(eta)
    for x in (np.zeros(dist.d), np.ones(dist.d)):
        s = np.abs(dist.score(x))
        assert np.all((s > 0) & (s < 1))


def test_finite_distribution():
    fin = FiniteDistribution([0.5, 0.3, 0.2])
    assert fin.m == 3
    assert fin.log_prob(1) == pytest.approx(np.log(0.3))
    with pytest.raises(ValueError):
        FiniteDistribution([0.5, 0.6])


def test_sample_batch_validation():
    with pytest.raises(ValueError):
        SampleBatch(np.zeros((2, 3)), np.zeros(3), np.zeros((2, 3)))
    b = SampleBatch(np.zeros((4, 2, 3)), np.zeros((4, 2)), np.zeros((4, 2, 3)))
    assert (b.K, b.d, b.batch_shape) == (2, 3, (4,))
