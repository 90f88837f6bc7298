"""Learned surrogate functions built from the other samples of a batch.

For sample ``k`` and a state ``y`` (``x_k`` itself or one of its operator
neighbors) the leave-one-out surrogates are::

    h_k(y)  = mean_{j != k} H (f(x_j), grad f(x_j) . (y - x_j))
    h'_k(y) = mean_{j != k} H'(f(x_j), grad f(x_j) . (y - x_j))

``H`` and ``H'`` are the two outputs of one small network (:class:`CVNetwork`),
so a single forward pass serves both.  In ``pooled`` mode the average moves
inside the network: one forward per ``(k, y)`` on the averaged inputs.

Inner products are computed from the precomputed table
``base_inner[j, k] = grad f(x_j) . (x_k - x_j)`` plus a correction for the
step from ``x_k`` to ``y``, which for a coordinate flip touches one entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import SampleBatch
from .nn import AdamState, DenseNet, adam_step, forward

MODES = ("leave_one_out", "pooled")


class CVNetwork:
    """Two-output network ``u = (f, inner) -> (H(u), H'(u))`` with its Adam state.

    The final layer starts at zero so both surrogates are identically zero
    before any adaptation.  ``n_forward`` counts network input rows evaluated.
    """

    def __init__(self, hidden=100, alpha=0.3, rng=None, standardize=False,
                 momentum=0.99):
        self.net = DenseNet.build([2, hidden, 2], activation="leaky_relu",
                                  alpha=alpha, rng=rng, zero_last=True)
        self.adam = AdamState(self.net.n_params)
        self.n_forward = 0
        self.standardize = standardize
        self.momentum = momentum
        self.f_mean = 0.0
        self.f_scale = 1.0
        self._seen = False

    @property
    def params(self) -> np.ndarray:
        return self.net.params

    @params.setter
    def params(self, value):
        self.net.params[...] = value

    def prepare(self, u):
        """Network input for raw ``(f, inner)`` pairs (identity unless standardizing)."""
        if not self.standardize:
            return u
        u = np.array(u, dtype=np.float64)
        u[..., 0] = (u[..., 0] - self.f_mean) / self.f_scale
        return u

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        self.n_forward += int(np.prod(u.shape[:-1]))
        return forward(self.net, u)

    def observe(self, f_values):
        """Update the running f statistics used when ``standardize`` is on.

        Call after the estimate for these values has been formed, so the
        surrogates never depend on the batch they are applied to.
        """
        if not self.standardize:
            return
        f = np.asarray(f_values, dtype=np.float64).ravel()
        mean, scale = f.mean(), max(f.std(), 1e-8)
        if not self._seen:
            self.f_mean, self.f_scale, self._seen = mean, scale, True
        else:
            a = self.momentum
            self.f_mean = a * self.f_mean + (1 - a) * mean
            self.f_scale = a * self.f_scale + (1 - a) * scale

    def update(self, grad, lr):
        self.params = adam_step(self.params, grad, self.adam, lr)


@dataclass
class SurrogateContext:
    batch: SampleBatch
    base_inner: np.ndarray  # (..., K, K), [j, k] = grad f(x_j) . (x_k - x_j)
    mode: str = "leave_one_out"

    @property
    def K(self) -> int:
        return self.batch.K


def build_context(batch: SampleBatch, mode: str = "leave_one_out") -> SurrogateContext:
    if mode not in MODES:
        raise ValueError(f"unknown surrogate mode {mode!r}; choose from {MODES}")
    if batch.K < 2:
        raise ValueError("leave-one-out surrogates need K >= 2 samples")
    g, x = batch.f_grads, batch.samples
    gx = np.einsum("...jd,...kd->...jk", g, x)
    base = gx - np.diagonal(gx, axis1=-2, axis2=-1)[..., :, None]
    return SurrogateContext(batch, base, mode)


def _others(K):
    """``(K, K-1)`` table of the indices j != k for each k."""
    return np.array([[j for j in range(K) if j != k] for k in range(K)], dtype=np.int64)


def naive_inner(ctx: SurrogateContext, states) -> np.ndarray:
    """``grad f(x_j) . (y - x_j)`` recomputed directly.

    ``states`` is ``(..., K, S, d)``: S states per sample k.  Returns
    ``(..., K, S, K)`` indexed ``[k, s, j]``.
    """
    g, x = ctx.batch.f_grads, ctx.batch.samples
    gy = np.einsum("...ksd,...jd->...ksj", states, g)
    gx = np.einsum("...jd,...jd->...j", g, x)
    return gy - gx[..., None, None, :]


def incremental_inner(ctx: SurrogateContext, states, flips=False) -> np.ndarray:
    """Same as :func:`naive_inner`, reusing ``base_inner``.

    With ``flips=True`` the states must be ``[x_k, flip_0 x_k, ..., flip_{d-1} x_k]``
    and each neighbor costs one multiply per j.
    """
    g, x = ctx.batch.f_grads, ctx.batch.samples
    base = np.swapaxes(ctx.base_inner, -1, -2)[..., :, None, :]  # [k, 1, j]
    if flips:
        # step i changes coordinate i by (1 - 2 x_{k,i})
        step = 1.0 - 2.0 * x  # (..., K, d)
        delta = np.swapaxes(g, -1, -2)[..., None, :, :] * step[..., :, :, None]  # [k, i, j]
        zero = np.zeros(delta.shape[:-2] + (1, delta.shape[-1]))
        delta = np.concatenate([zero, delta], axis=-2)
    else:
        delta = np.einsum("...ksd,...jd->...ksj", states - x[..., :, None, :], g)
    return base + delta


def surrogate_inputs(ctx: SurrogateContext, states, flips=False) -> np.ndarray:
    """Raw network inputs for evaluating every h_k at its S states.

    Returns ``(..., K, S, J, 2)`` with ``J = K - 1`` (leave-one-out) or
    ``J = 1`` (pooled, inputs averaged over j != k).
    """
    K = ctx.K
    inner = incremental_inner(ctx, states, flips=flips)  # [k, s, j]
    others = _others(K)
    f = ctx.batch.f_values
    inner_o = np.take_along_axis(
        inner, np.broadcast_to(others[:, None, :], inner.shape[:-1] + (K - 1,)), axis=-1)
    f_o = f[..., others]  # (..., K, K-1)
    f_o = np.broadcast_to(f_o[..., :, None, :], inner_o.shape)
    u = np.stack([f_o, inner_o], axis=-1)
    if ctx.mode == "pooled":
        u = u.mean(axis=-2, keepdims=True)
    return u


def evaluate_surrogates(ctx: SurrogateContext, cv: CVNetwork, states, flips=False):
    """``(h, inputs, outputs)``: h is ``(..., K, S, 2)`` (channel 0 = h, 1 = h')."""
    u = cv.prepare(surrogate_inputs(ctx, states, flips=flips))
    out = cv(u)
    return out.mean(axis=-2), u, out


class EvalRecorder:
    """Accumulates network inputs and outputs of individual surrogate evaluations."""

    def __init__(self):
        self.flush()

    def flush(self):
        self.inputs, self.outputs, self.sample_index, self.states = [], [], [], []

    def __len__(self):
        return len(self.inputs)

    def record(self, u, out, k, y):
        for row_u, row_o in zip(np.atleast_2d(u), np.atleast_2d(out)):
            self.inputs.append(row_u)
            self.outputs.append(row_o)
            self.sample_index.append(k)
            self.states.append(np.array(y, dtype=np.float64))


def _single_inputs(ctx, k, y, flip_info):
    batch = ctx.batch
    if batch.batch_shape:
        raise ValueError("pointwise surrogate evaluation needs an unbatched context")
    K = batch.K
    if not 0 <= k < K:
        raise IndexError(f"sample index {k} out of range for K={K}")
    y = np.asarray(y, dtype=np.float64)
    others = [j for j in range(K) if j != k]
    g, x, f = batch.f_grads, batch.samples, batch.f_values
    if flip_info is None:
        inner = np.array([g[j] @ (y - x[j]) for j in others])
    else:
        i, x_k = flip_info
        x_k = np.asarray(x_k, dtype=np.float64)
        inner = np.array([ctx.base_inner[j, k] + g[j, i] * (y[i] - x_k[i]) for j in others])
    u = np.stack([f[others], inner], axis=-1)
    if ctx.mode == "pooled":
        u = u.mean(axis=0, keepdims=True)
    return u


def h_pair_eval(ctx, cv, k, y, flip_info=None, recorder=None):
    """``(h_k(y), h'_k(y))`` from one shared set of network forwards.

    ``flip_info = (i, x_k)`` switches to the incremental inner product for a
    state ``y`` that differs from ``x_k`` only in coordinate ``i``.
    """
    u = cv.prepare(_single_inputs(ctx, k, y, flip_info))
    out = cv(u)
    if recorder is not None:
        recorder.record(u, out, k, y)
    h = out.mean(axis=0)
    return float(h[0]), float(h[1])


def h_eval(ctx, cv, k, y, flip_info=None, recorder=None) -> float:
    return h_pair_eval(ctx, cv, k, y, flip_info, recorder)[0]


def h_prime_eval(ctx, cv, k, y, flip_info=None, recorder=None) -> float:
    return h_pair_eval(ctx, cv, k, y, flip_info, recorder)[1]
