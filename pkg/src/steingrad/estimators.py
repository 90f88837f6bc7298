"""Score-function gradient estimators for factorized Bernoulli distributions.

All estimators accept a :class:`~steingrad.distributions.SampleBatch` whose
arrays may carry leading batch axes (one independent estimate per batch row,
for example one per data point of a VAE minibatch) together with logits of
the same leading shape.

The Stein-corrected estimators are affine in the network outputs.  Each one
returns its estimate split as ``affine_base + sum_e coeffs[e] . outputs[e]``
over every recorded network evaluation ``e``; :func:`cv_variance_grad` uses
this to differentiate ``||g||^2`` with respect to the network parameters
with one vector-Jacobian product.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .distributions import FactorizedBernoulli, SampleBatch
from .nn import vjp
from .stein import SteinOperator
from .surrogates import CVNetwork, SurrogateContext, build_context, evaluate_surrogates

ESTIMATORS = ("reinforce", "rloo", "reinforce_stein", "rodeo")


@dataclass
class AffineTerms:
    """Recorded network evaluations and their coefficients in the estimate.

    Rows are flattened evaluations: ``inputs`` ``(E, 2)``, ``outputs`` ``(E, 2)``,
    ``coeffs`` ``(E, 2, d)`` (per output channel), ``row`` ``(E,)`` the flat
    batch row each evaluation contributes to, ``sample_index`` ``(E,)`` the k
    whose surrogate it belongs to.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    coeffs: np.ndarray
    row: np.ndarray
    sample_index: np.ndarray

    def __len__(self):
        return len(self.inputs)


@dataclass
class GradEstimate:
    grad: np.ndarray
    affine_base: np.ndarray
    terms: AffineTerms | None = None
    diagnostics: dict = field(default_factory=dict)

    def reconstruct(self, outputs=None) -> np.ndarray:
        """``affine_base + sum_e coeffs[e] . outputs[e]`` (cached outputs by default)."""
        if self.terms is None:
            return self.affine_base.copy()
        out = self.terms.outputs if outputs is None else np.asarray(outputs)
        contrib = np.einsum("ecd,ec->ed", self.terms.coeffs, out)
        d = self.grad.shape[-1]
        flat = self.affine_base.reshape(-1, d).copy()
        np.add.at(flat, self.terms.row, contrib)
        return flat.reshape(self.grad.shape)


def _flatten(batch: SampleBatch, logits):
    logits = np.asarray(logits, dtype=np.float64)
    lead = batch.batch_shape
    d = batch.d
    if logits.shape[-1] != d:
        raise ValueError(f"logits have {logits.shape[-1]} coordinates, samples have {d}")
    logits = np.broadcast_to(logits, lead + (d,)).reshape(-1, d)
    x = batch.samples.reshape(-1, batch.K, d)
    f = batch.f_values.reshape(-1, batch.K)
    g = batch.f_grads.reshape(-1, batch.K, d)
    return lead, logits, x, f, g


def _loo_mean(v):
    K = v.shape[-1]
    return (v.sum(axis=-1, keepdims=True) - v) / (K - 1)


def reinforce(batch: SampleBatch, logits, baseline=0.0) -> GradEstimate:
    lead, eta, x, f, _ = _flatten(batch, logits)
    s = x - expit(eta)[:, None, :]
    grad = ((f - baseline)[..., None] * s).mean(axis=1).reshape(lead + (batch.d,))
    return GradEstimate(grad, grad.copy(), None, {"f_values": batch.f_values})


def rloo(batch: SampleBatch, logits) -> GradEstimate:
    if batch.K < 2:
        raise ValueError("RLOO needs K >= 2 samples")
    lead, eta, x, f, _ = _flatten(batch, logits)
    s = x - expit(eta)[:, None, :]
    grad = ((f - _loo_mean(f))[..., None] * s).mean(axis=1).reshape(lead + (batch.d,))
    return GradEstimate(grad, grad.copy(), None, {"f_values": batch.f_values})


def _stein_pieces(batch, logits, op, cv, ctx):
    """Shared evaluation for the two Stein-corrected estimators."""
    if batch.K < 2:
        raise ValueError("Stein control variates need K >= 2 samples")
    if ctx is None:
        ctx = build_context(batch)
    lead, eta, x, f, g = _flatten(batch, logits)
    B, K, d = x.shape
    flat_ctx = SurrogateContext(
        SampleBatch(x, f, g), ctx.base_inner.reshape(B, K, K), ctx.mode)
    p = expit(eta)
    dist = FactorizedBernoulli(eta[:, None, :])
    nbrs, w, self_w = op.neighbors(dist, x)
    states = np.concatenate([x[:, :, None, :], nbrs], axis=2)  # (B, K, S, d)
    weights = np.concatenate([self_w[..., None], w], axis=-1)  # (B, K, S)
    h, u, out = evaluate_surrogates(flat_ctx, cv, states, flips=op.neighborhood == "flips")
    score_states = states - p[:, None, None, :]
    return lead, x, f, p, states, weights, score_states, h, u, out


def _terms(u, out, coeffs):
    """Flatten ``(B, K, S, J, ...)`` evaluation arrays into :class:`AffineTerms`."""
    B, K, S, J = u.shape[:4]
    d = coeffs.shape[-1]
    row = np.broadcast_to(np.arange(B)[:, None, None, None], (B, K, S, J)).ravel()
    k = np.broadcast_to(np.arange(K)[None, :, None, None], (B, K, S, J)).ravel()
    return AffineTerms(u.reshape(-1, 2), out.reshape(-1, 2),
                       coeffs.reshape(-1, 2, d), row, k)


def reinforce_stein(batch: SampleBatch, logits, op: SteinOperator, cv: CVNetwork,
                    ctx: SurrogateContext | None = None) -> GradEstimate:
    """mean_k [ f(x_k) score(x_k) + (A h~_k)(x_k) ] with h~_k(y) = h_k(y) score(y)."""
    lead, x, f, p, states, W, sY, h, u, out = _stein_pieces(batch, logits, op, cv, ctx)
    B, K, S, J = u.shape[:4]
    s = x - p[:, None, :]
    base = (f[..., None] * s).mean(axis=1)
    cv_vec = (W[..., None] * h[..., 0, None] * sY).sum(axis=2)  # (B, K, d)
    grad = base + cv_vec.mean(axis=1)

    coeffs = np.zeros((B, K, S, J, 2, x.shape[-1]))
    coeffs[..., 0, :] = (W[..., None] * sY / (K * J))[:, :, :, None, :]
    d = x.shape[-1]
    diag = {"f_values": batch.f_values,
            "cv_magnitude": np.abs(cv_vec).mean()}
    return GradEstimate(grad.reshape(lead + (d,)), base.reshape(lead + (d,)),
                        _terms(u, out, coeffs), diag)


def rodeo(batch: SampleBatch, logits, op: SteinOperator, cv: CVNetwork,
          ctx: SurrogateContext | None = None) -> GradEstimate:
    """RLOO with a Stein-corrected baseline and a global Stein control variate.

    ``mean_k [ (f_k - mean_{j!=k}(f_j + (A h_j)(x_j))) score(x_k) + (A h~'_k)(x_k) ]``
    with ``h~'_k(y) = h'_k(y) score(y)``.
    """
    lead, x, f, p, states, W, sY, h, u, out = _stein_pieces(batch, logits, op, cv, ctx)
    B, K, S, J = u.shape[:4]
    d = x.shape[-1]
    s = x - p[:, None, :]
    scalar_cv = (W * h[..., 0]).sum(axis=2)  # (A h_k)(x_k), (B, K)
    vector_cv = (W[..., None] * h[..., 1, None] * sY).sum(axis=2)  # (B, K, d)
    baseline = _loo_mean(f + scalar_cv)
    grad = ((f - baseline)[..., None] * s + vector_cv).mean(axis=1)
    base = ((f - _loo_mean(f))[..., None] * s).mean(axis=1)

    # channel 0 of sample m enters the baselines of every k != m
    s_others = s.sum(axis=1, keepdims=True) - s  # (B, K, d)
    coeffs = np.empty((B, K, S, J, 2, d))
    coeffs[..., 0, :] = (-(W[..., None] * s_others[:, :, None, :]) / (K * (K - 1) * J))[:, :, :, None, :]
    coeffs[..., 1, :] = (W[..., None] * sY / (K * J))[:, :, :, None, :]
    diag = {"f_values": batch.f_values,
            "scalar_cv_magnitude": np.abs(scalar_cv).mean(),
            "vector_cv_magnitude": np.abs(vector_cv).mean()}
    return GradEstimate(grad.reshape(lead + (d,)), base.reshape(lead + (d,)),
                        _terms(u, out, coeffs), diag)


def cv_variance_grad(est: GradEstimate, cv: CVNetwork) -> np.ndarray:
    """Gradient of ``sum_rows ||g||^2`` with respect to the network parameters.

    A single-sample unbiased estimate of the gradient of the estimator's
    total variance (the squared mean does not depend on the network because
    the estimator is unbiased).  Estimates and surrogate inputs are constants.
    """
    if est.terms is None or len(est.terms) == 0:
        raise ValueError("estimate has no recorded network evaluations to differentiate")
    t = est.terms
    d = est.grad.shape[-1]
    g = est.grad.reshape(-1, d)[t.row]  # (E, d)
    cotangent = 2.0 * np.einsum("ecd,ed->ec", t.coeffs, g)
    _, param_grad = vjp(cv.net, t.inputs, cotangent)
    return param_grad


def estimate(name: str, batch: SampleBatch, logits, op=None, cv=None, ctx=None,
             baseline=0.0) -> GradEstimate:
    """Dispatch by estimator name."""
    if name == "reinforce":
        return reinforce(batch, logits, baseline)
    if name == "rloo":
        return rloo(batch, logits)
    if name == "reinforce_stein":
        return reinforce_stein(batch, logits, op, cv, ctx)
    if name == "rodeo":
        return rodeo(batch, logits, op, cv, ctx)
    raise ValueError(f"unknown estimator {name!r}; choose from {ESTIMATORS}")
