"""Discrete Stein operators on binary product spaces and indexed finite supports.

Every operator is represented through its action at a single state ``x``::

    (A h)(x) = self_weight * h(x) + sum_n weights[n] * h(neighbors[n])

:meth:`SteinOperator.neighbors` returns that triple, and everything else
(pointwise application, dense matrices, the gradient estimators) is built on
it.  For Gibbs, MPF and birth-death the self weight is minus the sum of the
neighbor weights (a Markov chain generator).  The difference operator is not
a generator and carries its own ``-b_x`` diagonal.

On {0,1}^d two neighborhoods are available:

``flips``
    the d states differing from ``x`` in exactly one coordinate.
``cyclic``
    increment/decrement of the lexicographic state index modulo 2**d
    (coordinate 0 most significant).

States of a :class:`~steingrad.distributions.FiniteDistribution` are integer
indices and always use the cyclic neighborhood (Gibbs there resamples the
whole state, so its neighbors are all other states).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .distributions import (
    CapacityError,
    FactorizedBernoulli,
    FiniteDistribution,
    all_states,
    index_to_state,
    state_index,
)

KINDS = ("gibbs", "mpf", "birthdeath", "difference")
NEIGHBORHOODS = ("flips", "cyclic")
MAX_DENSE_BINARY_DIM = 12
MAX_DENSE_STATES = 4096


@dataclass(frozen=True)
class SteinOperator:
    kind: str
    epsilon: float = 0.0
    neighborhood: str | None = None

    def __post_init__(self):
        kind = self.kind.lower().replace("-", "").replace("_", "")
        if kind not in KINDS:
            raise ValueError(f"unknown operator {self.kind!r}; choose from {KINDS}")
        object.__setattr__(self, "kind", kind)
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        nbhd = self.neighborhood
        if nbhd is None:
            nbhd = "cyclic" if kind == "birthdeath" else "flips"
        if nbhd not in NEIGHBORHOODS:
            raise ValueError(f"unknown neighborhood {nbhd!r}")
        if kind == "birthdeath" and nbhd != "cyclic":
            raise ValueError("the birth-death operator needs the cyclic inc/dec neighborhood")
        if kind == "gibbs" and nbhd != "flips":
            raise ValueError("the Gibbs operator is defined over coordinate flips")
        object.__setattr__(self, "neighborhood", nbhd)

    @property
    def is_generator(self) -> bool:
        return self.kind != "difference"

    def n_neighbors(self, d: int) -> int:
        if self.neighborhood == "flips":
            return d
        return 1 if self.kind == "difference" else 2

    def neighbors(self, dist, x):
        """``(neighbors, weights, self_weight)`` describing ``A`` at ``x``.

        For a binary distribution ``x`` has shape ``(..., d)`` and neighbors
        ``(..., n, d)``; for a finite distribution ``x`` holds integer indices
        and neighbors have shape ``(..., n)``.  Weights have shape ``(..., n)``.
        """
        if isinstance(dist, FiniteDistribution):
            return _indexed_neighbors(self, dist, x)
        if not isinstance(dist, FactorizedBernoulli):
            dist = FactorizedBernoulli(dist)
        x = dist._check(x)
        if self.neighborhood == "flips":
            return _flip_neighbors(self, dist, x)
        return _cyclic_binary_neighbors(self, dist, x)


def _flip_neighbors(op, dist, x):
    d = dist.d
    signed = (1.0 - 2.0 * x) * dist.logits
    nbrs = x[..., None, :] + np.eye(d) * (1.0 - 2.0 * x)[..., None, :]
    if op.kind == "gibbs":
        # conditional of coordinate i equals its marginal under factorization
        w = expit(signed) / d
        return nbrs, w, -w.sum(axis=-1)
    ratio = dist.flip_ratio(x, eps=op.epsilon)
    if op.kind == "mpf":
        w = np.sqrt(ratio)
        return nbrs, w, -w.sum(axis=-1)
    # difference with inc = dec = flip_i, averaged over coordinates
    w = np.broadcast_to(np.full(d, 1.0 / d), ratio.shape)
    return nbrs, w, -ratio.mean(axis=-1)


def _joint_ratio(log_num, log_den, eps):
    if eps == 0.0:
        return np.exp(log_num - log_den)
    return np.exp(log_num) / (np.exp(log_den) + eps)


def _cyclic_rates(op, lq_x, lq_inc, lq_dec):
    """Weights over (inc, dec) neighbors, or (dec,) for the difference operator."""
    if op.kind == "birthdeath":
        b = np.exp(lq_inc - lq_x)
        w = np.stack([b, np.ones_like(b)], axis=-1)
        return w, -(b + 1.0)
    if op.kind == "difference":
        b = _joint_ratio(lq_inc, lq_x, op.epsilon)
        return np.ones_like(b)[..., None], -b
    w = np.sqrt(np.stack([_joint_ratio(lq_inc, lq_x, op.epsilon),
                          _joint_ratio(lq_dec, lq_x, op.epsilon)], axis=-1))
    return w, -w.sum(axis=-1)


def _cyclic_binary_neighbors(op, dist, x):
    d = dist.d
    m = 2 ** d
    idx = state_index(x)
    inc = index_to_state((idx + 1) % m, d)
    dec = index_to_state((idx - 1) % m, d)
    lq_x = dist.log_prob(x)
    lq_inc, lq_dec = dist.log_prob(inc), dist.log_prob(dec)
    w, self_w = _cyclic_rates(op, lq_x, lq_inc, lq_dec)
    nbrs = dec[..., None, :] if op.kind == "difference" else np.stack([inc, dec], axis=-2)
    return nbrs, w, self_w


def _indexed_neighbors(op, dist, idx):
    idx = np.asarray(idx, dtype=np.int64)
    if np.any(idx < 0) or np.any(idx >= dist.m):
        raise IndexError("state index out of range")
    m = dist.m
    if op.kind == "gibbs":
        # resample the whole state: every other state is a neighbor
        others = (idx[..., None] + np.arange(1, m)) % m
        w = dist.probs[others]
        return others, w, -w.sum(axis=-1)
    inc, dec = (idx + 1) % m, (idx - 1) % m
    w, self_w = _cyclic_rates(op, dist.log_probs[idx], dist.log_probs[inc],
                              dist.log_probs[dec])
    nbrs = dec[..., None] if op.kind == "difference" else np.stack([inc, dec], axis=-1)
    return nbrs, w, self_w


def combine(weights, self_weight, h_x, h_nbrs):
    """Apply the operator given function values at ``x`` and at its neighbors.

    ``h_x`` has shape ``(...,) + out`` and ``h_nbrs`` ``(..., n) + out`` for any
    trailing output shape ``out``.
    """
    h_x = np.asarray(h_x, dtype=np.float64)
    h_nbrs = np.asarray(h_nbrs, dtype=np.float64)
    extra = h_x.ndim - np.ndim(self_weight)
    w = np.reshape(weights, np.shape(weights) + (1,) * extra)
    s = np.reshape(self_weight, np.shape(self_weight) + (1,) * extra)
    return s * h_x + (w * h_nbrs).sum(axis=np.ndim(weights) - 1)


def _evaluate(h, states, expect_vector):
    vals = np.asarray(h(states), dtype=np.float64)
    n = len(states)
    if vals.shape[:1] != (n,):
        raise ValueError(f"function returned shape {vals.shape} for {n} states")
    if expect_vector and vals.ndim != 2:
        raise ValueError("vector-valued function must return one fixed-length vector per state")
    if not expect_vector and vals.ndim != 1:
        raise ValueError("scalar function must return one value per state")
    return vals


def apply_scalar(op: SteinOperator, dist, h, x) -> float:
    """(A h)(x) for one state ``x``.

    ``h`` is called once with an array of states (rows: ``x`` followed by its
    neighbors) and must return one value per row.
    """
    nbrs, w, self_w = op.neighbors(dist, x)
    x_arr = np.asarray(x)
    states = np.concatenate([x_arr[None], nbrs], axis=0)
    vals = _evaluate(h, states, expect_vector=False)
    return float(combine(w, self_w, vals[0], vals[1:]))


def apply_vector(op: SteinOperator, dist, h, x) -> np.ndarray:
    """Componentwise (A h)(x) for a vector-valued ``h``; same calling convention."""
    nbrs, w, self_w = op.neighbors(dist, x)
    states = np.concatenate([np.asarray(x)[None], nbrs], axis=0)
    vals = _evaluate(h, states, expect_vector=True)
    return combine(w, self_w, vals[0], vals[1:])


def support_of(dist):
    """Enumerated states and their probabilities, in canonical order."""
    if isinstance(dist, FiniteDistribution):
        if dist.m > MAX_DENSE_STATES:
            raise CapacityError(f"support of size {dist.m} exceeds {MAX_DENSE_STATES}")
        return np.arange(dist.m), dist.probs
    if not isinstance(dist, FactorizedBernoulli):
        dist = FactorizedBernoulli(dist)
    if dist.d > MAX_DENSE_BINARY_DIM:
        raise CapacityError(f"2**{dist.d} states exceed the dense limit 2**{MAX_DENSE_BINARY_DIM}")
    return dist.enumerate_support()


def dense_generator(op: SteinOperator, dist) -> np.ndarray:
    """Matrix ``A`` over the enumerated support with ``(A h)(x) = sum_y A[x, y] h(y)``."""
    states, _ = support_of(dist)
    if isinstance(dist, FiniteDistribution):
        n_states = dist.m
        nbrs, w, self_w = op.neighbors(dist, states)
        cols = nbrs
    else:
        dist = dist if isinstance(dist, FactorizedBernoulli) else FactorizedBernoulli(dist)
        n_states = len(states)
        nbrs, w, self_w = op.neighbors(dist, states)
        cols = state_index(nbrs)
    A = np.zeros((n_states, n_states))
    rows = np.broadcast_to(np.arange(n_states)[:, None], cols.shape)
    np.add.at(A, (rows, cols), w)
    A[np.arange(n_states), np.arange(n_states)] += self_w
    return A
