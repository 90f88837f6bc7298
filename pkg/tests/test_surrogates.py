import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steingrad.checks import random_cv
from steingrad.distributions import FactorizedBernoulli, SampleBatch
from steingrad.estimators import rodeo
from steingrad.nn import forward
from steingrad.stein import SteinOperator
from steingrad.surrogates import (
    CVNetwork,
    EvalRecorder,
    build_context,
    evaluate_surrogates,
    h_eval,
    h_pair_eval,
    h_prime_eval,
    incremental_inner,
    naive_inner,
)


def random_batch(rng, K, d):
    x = (rng.random((K, d)) < 0.5).astype(float)
    return SampleBatch(x, rng.normal(size=K), rng.normal(size=(K, d)))


def flips_of(x):
    d = len(x)
    out = np.repeat(x[None], d, axis=0)
    out[np.arange(d), np.arange(d)] = 1 - out[np.arange(d), np.arange(d)]
    return out


def test_cv_architecture():
    cv = CVNetwork(rng=np.random.default_rng(0))
    assert [(l.in_dim, l.out_dim, l.activation) for l in cv.net.layers] == \
        [(2, 100, "leaky_relu"), (100, 2, "identity")]
    assert cv.net.layers[0].alpha == 0.3
    assert not cv.net.weights()[1][0].any() and not cv.net.weights()[1][1].any()


def test_context_identical_samples():
    x = np.array([[1.0, 0.0], [1.0, 0.0]])
    ctx = build_context(SampleBatch(x, np.zeros(2), np.ones((2, 2))))
    assert not ctx.base_inner.any()


def test_context_dot_product():
    x = np.array([[0.0, 1.0], [1.0, 1.0]])
    g = np.array([[1.0, 2.0], [0.0, 0.0]])
    ctx = build_context(SampleBatch(x, np.zeros(2), g))
    # 0-based [j=0, k=1]: grad f(x_1) . (x_2 - x_1)
    assert ctx.base_inner[0, 1] == 1.0
    assert np.all(np.diagonal(ctx.base_inner) == 0)


def test_context_rejects_small_k(rng):
    with pytest.raises(ValueError):
        build_context(random_batch(rng, 1, 3))
    with pytest.raises(ValueError):
        build_context(random_batch(rng, 3, 3), mode="nope")


def test_zero_network_surrogates(rng):
    ctx = build_context(random_batch(rng, 3, 4))
    cv = CVNetwork(rng=rng)
    y = ctx.batch.samples[1]
    assert h_eval(ctx, cv, 1, y) == 0.0 and h_prime_eval(ctx, cv, 1, y) == 0.0


def test_k2_collapses_to_single_term(rng):
    batch = random_batch(rng, 2, 3)
    ctx = build_context(batch)
    cv = random_cv(rng)
    x = batch.samples
    u = np.array([batch.f_values[0], batch.f_grads[0] @ (x[1] - x[0])])
    h, hp = h_pair_eval(ctx, cv, 1, x[1])
    np.testing.assert_allclose([h, hp], forward(cv.net, u), atol=1e-15)


@given(st.integers(2, 5), st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=40, deadline=None)
def test_incremental_equals_naive(K, d, seed):
    rng = np.random.default_rng(seed)
    batch = random_batch(rng, K, d)
    ctx = build_context(batch)
    states = np.stack([np.concatenate([x[None], flips_of(x)]) for x in batch.samples])
    naive = naive_inner(ctx, states)
    assert np.abs(incremental_inner(ctx, states, flips=True) - naive).max() <= 1e-12
    assert np.abs(incremental_inner(ctx, states) - naive).max() <= 1e-12


def test_pointwise_incremental_equals_naive(rng):
    batch = random_batch(rng, 3, 4)
    ctx = build_context(batch)
    cv = random_cv(rng)
    for k in range(3):
        xk = batch.samples[k]
        for i, y in enumerate(flips_of(xk)):
            a = h_pair_eval(ctx, cv, k, y)
            b = h_pair_eval(ctx, cv, k, y, flip_info=(i, xk))
            assert np.abs(np.subtract(a, b)).max() <= 1e-12


def test_batched_evaluation_matches_pointwise(rng):
    batch = random_batch(rng, 3, 4)
    ctx = build_context(batch)
    cv = random_cv(rng)
    states = np.stack([np.concatenate([x[None], flips_of(x)]) for x in batch.samples])
    h, _, _ = evaluate_surrogates(ctx, cv, states, flips=True)
    for k in range(3):
        for s in range(5):
            np.testing.assert_allclose(h[k, s], h_pair_eval(ctx, cv, k, states[k, s]), atol=1e-13)


@pytest.mark.parametrize("K", [2, 3, 5])
def test_pair_eval_forward_count(K, rng):
    batch = random_batch(rng, K, 3)
    cv = random_cv(rng)
    for mode, expected in (("leave_one_out", K - 1), ("pooled", 1)):
        ctx = build_context(batch, mode)
        before = cv.n_forward
        h_pair_eval(ctx, cv, 0, batch.samples[0])
        assert cv.n_forward - before == expected


def test_pooled_uses_mean_inputs(rng):
    batch = random_batch(rng, 3, 4)
    cv = random_cv(rng)
    ctx = build_context(batch, "pooled")
    y = batch.samples[2]
    f, g, x = batch.f_values, batch.f_grads, batch.samples
    u = np.array([(f[0] + f[1]) / 2, (g[0] @ (y - x[0]) + g[1] @ (y - x[1])) / 2])
    np.testing.assert_allclose(h_pair_eval(ctx, cv, 2, y), forward(cv.net, u), atol=1e-14)


def test_recorder_counts_flush_and_replay(rng):
    K, d = 2, 3
    batch = random_batch(rng, K, d)
    ctx = build_context(batch)
    cv = random_cv(rng)
    rec = EvalRecorder()
    for k in range(K):
        xk = batch.samples[k]
        h_pair_eval(ctx, cv, k, xk, recorder=rec)
        for i, y in enumerate(flips_of(xk)):
            h_pair_eval(ctx, cv, k, y, flip_info=(i, xk), recorder=rec)
    assert len(rec) == (K - 1) * K * (d + 1)
    replay = forward(cv.net, np.array(rec.inputs))
    assert np.abs(replay - np.array(rec.outputs)).max() <= 1e-14
    rec.flush()
    assert len(rec) == 0


def test_rodeo_terms_count_and_replay(rng):
    K, d = 2, 3
    batch = random_batch(rng, K, d)
    cv = random_cv(rng)
    est = rodeo(batch, rng.normal(size=d), SteinOperator("gibbs"), cv)
    assert len(est.terms) == (K - 1) * K * (d + 1)
    assert np.abs(forward(cv.net, est.terms.inputs) - est.terms.outputs).max() <= 1e-14


def test_leave_one_out_independence(rng):
    K, d = 3, 4
    batch = random_batch(rng, K, d)
    cv = random_cv(rng)
    k = 1
    ys = np.concatenate([batch.samples[k][None], flips_of(batch.samples[k])])
    before = [h_pair_eval(build_context(batch), cv, k, y) for y in ys]
    x, f, g = batch.samples.copy(), batch.f_values.copy(), batch.f_grads.copy()
    x[k] = 1 - x[k]
    f[k] = 99.0
    g[k] = rng.normal(size=d)
    perturbed = build_context(SampleBatch(x, f, g))
    after = [h_pair_eval(perturbed, cv, k, y) for y in ys]
    assert np.array_equal(before, after)


def test_index_out_of_range(rng):
    ctx = build_context(random_batch(rng, 2, 2))
    with pytest.raises(IndexError):
        h_eval(ctx, CVNetwork(rng=rng), 2, np.zeros(2))


def test_standardize_is_causal(rng):
    cv = CVNetwork(rng=rng, standardize=True)
    u = np.array([[4.0, 1.0]])
    assert np.array_equal(cv.prepare(u), u)
    cv.observe(np.array([2.0, 6.0]))
    assert cv.prepare(u)[0, 0] == pytest.approx((4.0 - 4.0) / 2.0)
    assert CVNetwork(rng=rng).prepare(u) is u
