"""Exact enumeration checks.

Expectations here are sums over the full support (or over every ordered
K-tuple of states), weighted by exact probabilities.  The estimators are run
through their production code path on a batch holding every tuple; only the
sampling step is replaced.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .distributions import CapacityError, FactorizedBernoulli, SampleBatch, all_states
from .estimators import estimate
from .stein import dense_generator, support_of
from .surrogates import build_context


@dataclass(frozen=True)
class EnumerationBudget:
    max_states: int = 4096
    max_tuples: int = 1_000_000


DEFAULT_BUDGET = EnumerationBudget()


def _support(d, budget):
    if 2 ** d > budget.max_states:
        raise CapacityError(f"2**{d} states exceed the budget of {budget.max_states}")
    return all_states(d)


def exact_expectation(task, logits, budget: EnumerationBudget = DEFAULT_BUDGET):
    """``(E_q[f], grad_eta E_q[f])`` by summing over all states."""
    dist = FactorizedBernoulli(logits)
    states = _support(dist.d, budget)
    q = np.exp(dist.log_prob(states))
    f, _ = task.f_and_grad(states)
    return q @ f, (q * f) @ dist.score(states)


def exact_gradient(task, logits, budget: EnumerationBudget = DEFAULT_BUDGET) -> np.ndarray:
    return exact_expectation(task, logits, budget)[1]


def all_tuples(d, K, budget: EnumerationBudget = DEFAULT_BUDGET):
    """Every ordered K-tuple of states, ``(T, K, d)``, with the state indices."""
    states = _support(d, budget)
    n = len(states)
    if n ** K > budget.max_tuples:
        raise CapacityError(f"{n}**{K} tuples exceed the budget of {budget.max_tuples}")
    idx = np.array(list(itertools.product(range(n), repeat=K)), dtype=np.int64)
    return states[idx], idx


def enumerated_estimator_mean(name, task, logits, K, op=None, cv=None, mode="leave_one_out",
                              baseline=0.0, budget: EnumerationBudget = DEFAULT_BUDGET):
    """Exact expectation of an estimator over i.i.d. K-tuples from q."""
    dist = FactorizedBernoulli(logits)
    tuples, idx = all_tuples(dist.d, K, budget)
    states = all_states(dist.d)
    q = np.exp(dist.log_prob(states))
    weight = np.prod(q[idx], axis=1)
    f, g = task.f_and_grad(tuples)
    batch = SampleBatch(tuples, f, g)
    ctx = build_context(batch, mode) if name in ("reinforce_stein", "rodeo") else None
    est = estimate(name, batch, dist.logits, op=op, cv=cv, ctx=ctx, baseline=baseline)
    # sequential sum keeps the reduction order fixed
    return weight @ est.grad


def stationarity_check(op, dist) -> float:
    """Largest entry of ``|A^T q|`` over the enumerated support."""
    _, q = support_of(dist)
    A = dense_generator(op, dist)
    return float(np.abs(A.T @ q).max())


def mean_zero_check(op, dist, h_table) -> float:
    """``|E_q[A h]|`` for a function given as a table over the support."""
    _, q = support_of(dist)
    A = dense_generator(op, dist)
    return float(np.abs(q @ (A @ np.asarray(h_table, dtype=np.float64))).max())
