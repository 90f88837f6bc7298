"""Four discrete Stein operators on a small binary space.

Each operator turns any function h into a function A h with zero mean under
q.  Here we build the dense matrices, look at one, and check A^T q = 0.
"""

import numpy as np

from steingrad import FactorizedBernoulli, SteinOperator, apply_scalar, dense_generator
from steingrad.distributions import FiniteDistribution, state_index
from steingrad.oracle import mean_zero_check, stationarity_check

np.set_printoptions(precision=3, suppress=True)
rng = np.random.default_rng(0)

# A 3-bit factorized Bernoulli: 8 states, listed with coordinate 0 most significant.
q = FactorizedBernoulli([1.2, -0.5, 0.3])
states, probs = q.enumerate_support()
print("states:\n", states)
print("q:", probs)

# The Gibbs operator only moves along single-coordinate flips, so each row has 3 off-diagonal entries.
A = dense_generator(SteinOperator("gibbs"), q)
print("\nGibbs operator:\n", A)
print("row sums:", A.sum(axis=1))

# Stationarity: q is left-invariant for every operator (epsilon = 0).
for kind in ("gibbs", "mpf", "birthdeath", "difference"):
    op = SteinOperator(kind)
    h = rng.normal(size=8)
    print(f"{kind:>10s}  max|A^T q| = {stationarity_check(op, q):.1e}"
          f"   |E_q[A h]| = {mean_zero_check(op, q, h):.1e}")

# Pointwise evaluation never builds the matrix; h is any vectorized function of states.
h_table = rng.normal(size=8)
h = lambda s: h_table[state_index(s)]
x = np.array([1.0, 0.0, 1.0])
print("\n(A h)(x) pointwise:", apply_scalar(SteinOperator("mpf"), q, h, x))
print("(A h)(x) from the matrix:", (dense_generator(SteinOperator("mpf"), q) @ h_table)[5])

# Birth-death on an indexed support of three states.
fin = FiniteDistribution([0.5, 0.3, 0.2])
print("\nbirth-death generator:\n", dense_generator(SteinOperator("birthdeath"), fin))

# Stabilizing the ratios with epsilon = 1e-3 breaks the identity slightly.
for eps in (0.0, 1e-3):
    print(f"mpf, eps={eps:g}: max|A^T q| = {stationarity_check(SteinOperator('mpf', eps), q):.2e}")
