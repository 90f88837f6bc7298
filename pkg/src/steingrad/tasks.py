"""Desk-scale objectives and the online training loop.

Two tasks are provided:

* :class:`QuadraticTask`, ``f(x) = -sum_i w_i (x_i - c_i)^2``, whose expectation
  under a factorized Bernoulli has a closed form, so the training objective
  is reported exactly.
* :class:`ToyVAE`, a binary-latent VAE on synthetic 16-bit patterns with
  ``f(x) = log p(y | x) + log p(x) - log q(x | y)``.

:func:`train` alternates one ascent step on the distribution parameters with
one descent step of the control-variate network on ``||g||^2``, using the same
samples for both.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .config import RunConfig, TraceRecord, rng_stream
from .distributions import (
    CapacityError,
    FactorizedBernoulli,
    SampleBatch,
    all_states,
    log_sigmoid,
    state_index,
)
from .estimators import cv_variance_grad, estimate
from .nn import AdamState, DenseNet, adam_step, forward, vjp
from .oracle import EnumerationBudget, exact_expectation
from .surrogates import CVNetwork, build_context

MAX_EXACT_DIM = 16
DATA_SEED = 1234


class NumericalError(FloatingPointError):
    """Training produced non-finite values; ``trace`` holds the rows completed so far."""

    def __init__(self, msg, trace=None, state=None):
        super().__init__(msg)
        self.trace = trace or []
        self.state = state


class QuadraticTask:
    def __init__(self, center, weights):
        self.center = np.asarray(center, dtype=np.float64)
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.center.shape != self.weights.shape or self.center.ndim != 1:
            raise ValueError("center and weights must be vectors of equal length")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        self.n_evals = 0

    @classmethod
    def random(cls, d, rng):
        return cls(rng.uniform(0.0, 1.0, d), rng.uniform(0.5, 1.5, d))

    @property
    def d(self) -> int:
        return self.center.size

    def f_and_grad(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d:
            raise ValueError(f"expected {self.d} coordinates, got {x.shape[-1]}")
        diff = x - self.center
        f = -(self.weights * diff ** 2).sum(axis=-1)
        self.n_evals += f.size
        return f, -2.0 * self.weights * diff

    def closed_form(self, logits):
        """Exact ``(E_q[f], grad_eta E_q[f])`` coordinate by coordinate."""
        p = expit(np.asarray(logits, dtype=np.float64))
        f1 = -self.weights * (1.0 - self.center) ** 2
        f0 = -self.weights * self.center ** 2
        value = (p * f1 + (1.0 - p) * f0).sum(axis=-1)
        return value, p * (1.0 - p) * (f1 - f0)


class TableTask:
    """f and its 'gradient' given as arbitrary tables over {0,1}^d.

    The gradient table need not be the derivative of anything; the estimators
    stay unbiased for any table, which is what the enumeration checks use.
    """

    def __init__(self, f_table, grad_table=None):
        self.f_table = np.asarray(f_table, dtype=np.float64)
        n = self.f_table.size
        d = int(round(math.log2(n)))
        if 2 ** d != n:
            raise ValueError("table length must be a power of two")
        self._d = d
        self.grad_table = (np.zeros((n, d)) if grad_table is None
                           else np.asarray(grad_table, dtype=np.float64))
        self.n_evals = 0

    @classmethod
    def random(cls, d, rng):
        return cls(rng.normal(size=2 ** d), rng.normal(size=(2 ** d, d)))

    @property
    def d(self) -> int:
        return self._d

    def f_and_grad(self, x):
        idx = state_index(x)
        self.n_evals += np.size(idx)
        return self.f_table[idx], self.grad_table[idx]


def exact_objective(task, logits, budget: EnumerationBudget | None = None):
    """Exact ``(E_q[f], grad_eta E_q[f])`` by enumeration.

    For a :class:`QuadraticTask` the closed form is computed as well and must
    agree to 1e-9.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[-1] > MAX_EXACT_DIM:
        raise CapacityError(f"exact objective limited to d <= {MAX_EXACT_DIM}")
    budget = budget or EnumerationBudget(max_states=2 ** MAX_EXACT_DIM)
    value, grad = exact_expectation(task, logits, budget)
    if isinstance(task, QuadraticTask):
        cv, cg = task.closed_form(logits)
        if abs(cv - value) > 1e-9 or np.abs(cg - grad).max() > 1e-9:
            raise ArithmeticError("enumeration and closed form disagree")
    return value, grad


# --------------------------------------------------------------------------
# toy VAE


def make_synthetic_data(n=200, dim=16, latent=4, seed=DATA_SEED):
    """Binary patterns from a fixed random latent-variable model."""
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 3.0, size=(dim, latent))
    b = rng.normal(0.0, 1.0, size=dim)
    z = (rng.random((n, latent)) < 0.5).astype(np.float64)
    return (rng.random((n, dim)) < expit(z @ w.T + b)).astype(np.float64)


class ToyVAE:
    """Bernoulli VAE with a uniform factorized Bernoulli prior on the latent."""

    def __init__(self, data, latent_dim=8, hidden=32, rng=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.latent_dim = latent_dim
        obs = self.data.shape[1]
        rng = np.random.default_rng() if rng is None else rng
        self.encoder = DenseNet.build([obs, hidden, latent_dim], rng=rng)
        self.decoder = DenseNet.build([latent_dim, hidden, obs], rng=rng)
        self.n_evals = 0

    @property
    def d(self) -> int:
        return self.latent_dim

    def logits(self, y):
        return forward(self.encoder, y)

    def _terms(self, x, y, eta):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.latent_dim:
            raise ValueError(f"expected {self.latent_dim} latent coordinates, got {x.shape[-1]}")
        lik_logits = forward(self.decoder, x)
        log_lik = log_sigmoid((2.0 * y - 1.0) * lik_logits).sum(axis=-1)
        # linear in x, so the x-gradient below is exact for real-valued x too
        log_q = (x * log_sigmoid(eta) + (1.0 - x) * log_sigmoid(-eta)).sum(axis=-1)
        f = log_lik - self.latent_dim * math.log(2.0) - log_q
        self.n_evals += f.size
        return f, lik_logits

    def f_and_grad_full(self, x, y, eta=None):
        """``(f, grad_x f, decoder param grad of sum(log p(y|x)))``.

        ``y`` and ``eta`` must broadcast against ``x`` on the leading axes.
        """
        eta = self.logits(y) if eta is None else eta
        f, lik_logits = self._terms(x, y, eta)
        if not np.all(np.isfinite(f)):
            raise NumericalError("non-finite ELBO integrand")
        ct = np.broadcast_to(y, lik_logits.shape) - expit(lik_logits)
        gx, gtheta = vjp(self.decoder, x, ct)
        # x enters log q linearly with slope eta
        return f, gx - eta, gtheta

    def f_and_grad(self, x, y, eta=None):
        f, gx, _ = self.f_and_grad_full(x, y, eta)
        return f, gx

    def exact_elbo(self, data=None):
        """Average ELBO over the data, summing exactly over all latent states."""
        data = self.data if data is None else np.asarray(data, dtype=np.float64)
        if self.latent_dim > MAX_EXACT_DIM:
            raise CapacityError("latent space too large to enumerate")
        states = all_states(self.latent_dim)
        lik_logits = forward(self.decoder, states)  # (S, obs)
        log_lik = data @ log_sigmoid(lik_logits).T + (1.0 - data) @ log_sigmoid(-lik_logits).T
        eta = self.logits(data)  # (N, d)
        log_q = states @ log_sigmoid(eta).T + (1.0 - states) @ log_sigmoid(-eta).T  # (S, N)
        log_q = log_q.T
        f = log_lik - self.latent_dim * math.log(2.0) - log_q
        return float((np.exp(log_q) * f).sum(axis=1).mean())


def encoder_jacobian(vae: ToyVAE, y) -> np.ndarray:
    """``(B * d, P)`` Jacobian of the encoder logits w.r.t. its parameters."""
    y = np.atleast_2d(y)
    d = vae.latent_dim
    rows = []
    for b in range(len(y)):
        for i in range(d):
            ct = np.zeros(d)
            ct[i] = 1.0
            rows.append(vjp(vae.encoder, y[b], ct)[1])
    return np.array(rows)


# --------------------------------------------------------------------------
# training


@dataclass
class TrainState:
    config: RunConfig
    task: object
    cv: CVNetwork | None
    eta: np.ndarray | None = None
    adam: dict = field(default_factory=dict)
    step: int = 0
    f_evals: int = 0
    net_evals: int = 0
    rngs: dict = field(default_factory=dict)


@dataclass
class TrainResult:
    trace: list
    state: TrainState
    samples: list | None = None

    @property
    def final_objective(self) -> float:
        if isinstance(self.state.task, ToyVAE):
            return self.state.task.exact_elbo()
        return self.trace[-1].objective if self.trace else math.nan


def init_state(config: RunConfig) -> TrainState:
    init_rng = rng_stream(config.seed, "init")
    task_rng = rng_stream(config.seed, "task")
    cv = None
    if config.uses_cv:
        # own stream, so having a network never shifts the task's initial weights
        cv = CVNetwork(hidden=config.hidden, rng=rng_stream(config.seed, "cv_init"),
                       standardize=config.standardize_f)
    if config.task == "quadratic":
        task = QuadraticTask.random(config.dim, task_rng)
        eta = np.zeros(config.dim)
        adam = {"eta": AdamState(config.dim)}
    else:
        task = ToyVAE(make_synthetic_data(config.n_data), latent_dim=config.dim, rng=init_rng)
        eta = None
        adam = {"encoder": AdamState(task.encoder.n_params),
                "decoder": AdamState(task.decoder.n_params)}
    rngs = {"sampling": rng_stream(config.seed, "sampling"),
            "minibatch": rng_stream(config.seed, "minibatch")}
    return TrainState(config, task, cv, eta, adam, rngs=rngs)


def _estimate(config, state, batch, logits):
    op = config.stein_operator() if config.uses_cv else None
    ctx = build_context(batch, config.surrogate_mode) if config.uses_cv else None
    return estimate(config.estimator, batch, logits, op=op, cv=state.cv, ctx=ctx)


def _adapt_cv(config, state, est, f_values):
    if state.cv is None:
        return
    if config.adapt_gamma:
        state.cv.update(cv_variance_grad(est, state.cv), config.lr_gamma)
    state.cv.observe(f_values)


def _quadratic_step(config, state):
    task, K = state.task, config.K
    x = FactorizedBernoulli(state.eta).sample(state.rngs["sampling"], K)
    n0 = task.n_evals
    f, g = task.f_and_grad(x)
    state.f_evals += task.n_evals - n0
    batch = SampleBatch(x, f, g)
    c0 = state.cv.n_forward if state.cv else 0
    est = _estimate(config, state, batch, state.eta)
    state.net_evals += (state.cv.n_forward - c0) if state.cv else 0
    state.eta = adam_step(state.eta, -est.grad, state.adam["eta"], config.eta_lr)
    _adapt_cv(config, state, est, f)
    return x, task.closed_form(state.eta)[0]


def _vae_step(config, state):
    vae, K = state.task, config.K
    idx = state.rngs["minibatch"].integers(0, len(vae.data), config.batch_size)
    y = vae.data[idx]
    eta = vae.logits(y)
    x = FactorizedBernoulli(eta).sample(state.rngs["sampling"], K)  # (B, K, d)
    n0 = vae.n_evals
    f, gx, gtheta = vae.f_and_grad_full(x, y[:, None, :], eta[:, None, :])
    state.f_evals += vae.n_evals - n0
    batch = SampleBatch(x, f, gx)
    c0 = state.cv.n_forward if state.cv else 0
    est = _estimate(config, state, batch, eta)
    state.net_evals += (state.cv.n_forward - c0) if state.cv else 0
    B = config.batch_size
    _, genc = vjp(vae.encoder, y, est.grad)
    lr = config.eta_lr
    vae.encoder.params = adam_step(vae.encoder.params, -genc / B, state.adam["encoder"], lr)
    vae.decoder.params = adam_step(vae.decoder.params, -gtheta / (B * K),
                                   state.adam["decoder"], lr)
    _adapt_cv(config, state, est, f)
    return x, float(f.mean())


def _finite(state):
    arrays = [state.cv.params] if state.cv else []
    if isinstance(state.task, ToyVAE):
        arrays += [state.task.encoder.params, state.task.decoder.params]
    else:
        arrays.append(state.eta)
    return all(np.all(np.isfinite(a)) for a in arrays)


def train(config: RunConfig, record_samples=False, on_record=None) -> TrainResult:
    """Run ``config.steps`` steps and return the per-step trace.

    Variance probes, when enabled, draw from their own random stream so they
    never change the training trajectory.  ``on_record`` is called with each
    trace row as it is produced.
    """
    state = init_state(config)
    probe_rng = rng_stream(config.seed, "probe")
    step_fn = _quadratic_step if config.task == "quadratic" else _vae_step
    trace, samples = [], [] if record_samples else None
    start = time.perf_counter()
    for t in range(1, config.steps + 1):
        try:
            with np.errstate(over="raise", invalid="raise"):
                x, objective = step_fn(config, state)
        except FloatingPointError as err:
            raise NumericalError(f"step {t}: {err}", trace, state) from err
        state.step = t
        if not _finite(state) or not math.isfinite(objective):
            raise NumericalError(f"step {t}: non-finite parameters or objective", trace, state)
        if record_samples:
            samples.append(x)
        var = se = None
        if config.variance_probe_every and t % config.variance_probe_every == 0:
            probe = variance_probe(config, state, config.variance_probe_samples, probe_rng)
            var, se = probe.trace_variance, probe.stderr
        wall = time.perf_counter() - start if config.wall_clock else 0.0
        row = TraceRecord(t, float(objective), var, se, state.f_evals, state.net_evals, wall)
        trace.append(row)
        if on_record is not None:
            on_record(row)
    return TrainResult(trace, state, samples)


# --------------------------------------------------------------------------
# variance probes


@dataclass
class ProbeResult:
    trace_variance: float
    stderr: float
    per_coordinate: np.ndarray
    sq_dev: np.ndarray  # per-draw ||g_n - mean||^2 * N/(N-1), for paired comparisons

    @classmethod
    def from_draws(cls, grads):
        grads = np.asarray(grads, dtype=np.float64)
        n = len(grads)
        if n < 2:
            raise ValueError("need at least 2 draws to estimate a variance")
        dev = grads - grads.mean(axis=0)
        z = (dev ** 2).sum(axis=1) * n / (n - 1)
        return cls(float(z.mean()), float(z.std(ddof=1) / math.sqrt(n)),
                   (dev ** 2).sum(axis=0) / (n - 1), z)


def _quadratic_draws(config, state, n, rng, estimator):
    task = state.task
    logits = np.broadcast_to(state.eta, (n, task.d))
    x = FactorizedBernoulli(logits).sample(rng, config.K)
    f, g = task.f_and_grad(x)
    cfg = _with_estimator(config, estimator)
    return _estimate(cfg, state, SampleBatch(x, f, g), logits).grad


def _vae_draws(config, state, n, rng, estimator, y):
    vae = state.task
    eta = vae.logits(y)
    jac = encoder_jacobian(vae, y)
    logits = np.broadcast_to(eta, (n,) + eta.shape)
    x = FactorizedBernoulli(logits).sample(rng, config.K)  # (n, B, K, d)
    f, gx = vae.f_and_grad(x, y[None, :, None, :], logits[..., None, :])
    cfg = _with_estimator(config, estimator)
    g_eta = _estimate(cfg, state, SampleBatch(x, f, gx), logits).grad  # (n, B, d)
    return g_eta.reshape(n, -1) @ jac / len(y)


def _with_estimator(config, estimator):
    if estimator is None or estimator == config.estimator:
        return config
    return replace(config, estimator=estimator)


def variance_probe(config: RunConfig, state: TrainState, n: int, rng=None,
                   estimator=None, chunk=2000) -> ProbeResult:
    """Trace of the empirical covariance of ``n`` independent estimates at a frozen state.

    For the quadratic task the estimate is the logit gradient; for the toy
    VAE it is the encoder-parameter gradient on one fixed probe minibatch.
    ``estimator`` overrides the configured one (e.g. probing RLOO at a RODEO
    snapshot); it must not need a network the state does not have.  Counters
    in ``state`` are not touched.
    """
    if n < 2:
        raise ValueError("variance probe needs N >= 2")
    rng = rng_stream(config.seed, "probe") if rng is None else rng
    name = estimator or config.estimator
    if name in ("reinforce_stein", "rodeo") and state.cv is None:
        raise ValueError(f"{name} needs a control-variate network")
    saved_forward = state.cv.n_forward if state.cv else 0
    saved_evals = state.task.n_evals
    y = None
    if isinstance(state.task, ToyVAE):
        idx = rng.integers(0, len(state.task.data), config.batch_size)
        y = state.task.data[idx]
    draws = []
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        if y is None:
            draws.append(_quadratic_draws(config, state, m, rng, name))
        else:
            draws.append(_vae_draws(config, state, m, rng, name, y))
    if state.cv:
        state.cv.n_forward = saved_forward
    state.task.n_evals = saved_evals
    return ProbeResult.from_draws(np.concatenate(draws))
