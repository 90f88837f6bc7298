"""Factorized Bernoulli distributions over {0,1}^d, parameterized by logits.

Everything is computed in logit space.  Joint probabilities are only formed
by :meth:`FactorizedBernoulli.enumerate_support`, which exists for exact
enumeration checks at small ``d``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

MAX_ENUM_DIM = 20


class CapacityError(RuntimeError):
    """An exact computation was refused because it exceeds its size budget."""


def log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def all_states(d: int) -> np.ndarray:
    """All ``2**d`` binary vectors, lexicographic with coordinate 0 most significant."""
    if d < 1:
        raise ValueError("d must be positive")
    if d > MAX_ENUM_DIM:
        raise CapacityError(f"refusing to enumerate 2**{d} states (limit d={MAX_ENUM_DIM})")
    return index_to_state(np.arange(2 ** d), d)


def index_to_state(idx, d: int) -> np.ndarray:
    shifts = np.arange(d - 1, -1, -1)
    return ((np.asarray(idx)[..., None] >> shifts) & 1).astype(np.float64)


def state_index(x) -> np.ndarray:
    """Inverse of :func:`all_states`: integer index of each binary vector."""
    x = np.asarray(x)
    d = x.shape[-1]
    powers = 1 << np.arange(d - 1, -1, -1)
    return (x.astype(np.int64) * powers).sum(axis=-1)


class FactorizedBernoulli:
    """q(x) = prod_i sigmoid(eta_i)^x_i (1 - sigmoid(eta_i))^(1 - x_i).

    ``logits`` may carry leading batch axes (one distribution per row); the
    last axis is the coordinate axis.
    """

    def __init__(self, logits):
        logits = np.asarray(logits, dtype=np.float64)
        if logits.ndim == 0:
            logits = logits[None]
        if logits.shape[-1] < 1:
            raise ValueError("need at least one coordinate")
        if not np.all(np.isfinite(logits)):
            raise ValueError("logits must be finite")
        self.logits = logits

    @property
    def d(self) -> int:
        return self.logits.shape[-1]

    @property
    def probs(self) -> np.ndarray:
        return expit(self.logits)

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1:] != (self.d,):
            raise ValueError(f"state has {x.shape[-1:]} coordinates, expected {self.d}")
        return x

    def sample(self, rng: np.random.Generator, K: int) -> np.ndarray:
        """K i.i.d. draws, shape ``batch_shape + (K, d)``.

        Always consumes exactly ``K * logits.size`` uniforms from ``rng``, so
        different callers sharing a seed see the same noise.
        """
        if K < 1:
            raise ValueError("K must be at least 1")
        shape = self.logits.shape[:-1] + (K, self.d)
        u = rng.random(shape)
        return (u < self.probs[..., None, :]).astype(np.float64)

    def coord_log_prob(self, x) -> np.ndarray:
        """Per-coordinate log q_i(x_i)."""
        x = self._check(x)
        return log_sigmoid((2.0 * x - 1.0) * self.logits)

    def log_prob(self, x) -> np.ndarray:
        return self.coord_log_prob(x).sum(axis=-1)

    def score(self, x) -> np.ndarray:
        """Gradient of log q(x) with respect to the logits: ``x - sigmoid(eta)``."""
        x = self._check(x)
        return x - self.probs

    def flip_ratio(self, x, i=None, eps: float = 0.0) -> np.ndarray:
        """q_i(1 - x_i) / (q_i(x_i) + eps) for one coordinate, or all when ``i`` is None.

        With ``eps == 0`` this is exactly ``q(flip_i x) / q(x)`` for the joint.
        """
        x = self._check(x)
        if i is not None and not 0 <= i < self.d:
            raise IndexError(f"coordinate {i} out of range for d={self.d}")
        signed = (1.0 - 2.0 * x) * self.logits
        if eps == 0.0:
            ratio = np.exp(signed)
        else:
            ratio = expit(signed) / (expit(-signed) + eps)
        return ratio if i is None else ratio[..., i]

    def enumerate_support(self):
        """``(states, probs)`` over all 2**d states in canonical order."""
        if self.logits.ndim != 1:
            raise ValueError("enumeration needs a single (unbatched) distribution")
        states = all_states(self.d)
        # product of coordinate probabilities: exact where it can be (eta = 0 gives 2**-d)
        return states, np.prod(expit((2.0 * states - 1.0) * self.logits), axis=-1)


class FiniteDistribution:
    """Explicit distribution over an indexed support {z_0, ..., z_{m-1}}.

    States are represented by their integer index.
    """

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 2:
            raise ValueError("need a 1-d probability vector with at least 2 states")
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be positive and sum to 1")
        self.probs = probs
        self.log_probs = np.log(probs)

    @property
    def m(self) -> int:
        return self.probs.size

    def log_prob(self, idx):
        return self.log_probs[np.asarray(idx)]


@dataclass
class SampleBatch:
    """K samples with cached f values and gradients.

    Arrays may carry leading batch axes: ``samples`` is ``(..., K, d)``,
    ``f_values`` ``(..., K)`` and ``f_grads`` ``(..., K, d)``.
    """

    samples: np.ndarray
    f_values: np.ndarray
    f_grads: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.f_values = np.asarray(self.f_values, dtype=np.float64)
        self.f_grads = np.asarray(self.f_grads, dtype=np.float64)
        if self.samples.ndim < 2:
            raise ValueError("samples must have shape (..., K, d)")
        if self.f_values.shape != self.samples.shape[:-1]:
            raise ValueError("f_values must have shape (..., K)")
        if self.f_grads.shape != self.samples.shape:
            raise ValueError("f_grads must match samples in shape")
        if self.K < 1:
            raise ValueError("a batch needs at least one sample")

    @property
    def K(self) -> int:
        return self.samples.shape[-2]

    @property
    def d(self) -> int:
        return self.samples.shape[-1]

    @property
    def batch_shape(self):
        return self.samples.shape[:-2]
