"""Score-function gradient estimators with Stein-operator control variates
for factorized Bernoulli distributions."""

__version__ = "0.1.0"

from .distributions import (
    CapacityError,
    FactorizedBernoulli,
    FiniteDistribution,
    SampleBatch,
    all_states,
)
from .estimators import ESTIMATORS, GradEstimate, cv_variance_grad, estimate
from .nn import AdamState, DenseNet, adam_step, forward, vjp
from .stein import SteinOperator, apply_scalar, apply_vector, dense_generator
from .surrogates import CVNetwork, build_context
from .config import RunConfig
from .tasks import NumericalError, QuadraticTask, ToyVAE, train, variance_probe

__all__ = [
    "AdamState", "CVNetwork", "CapacityError", "DenseNet", "ESTIMATORS",
    "FactorizedBernoulli", "FiniteDistribution", "GradEstimate", "NumericalError",
    "QuadraticTask", "RunConfig", "SampleBatch", "SteinOperator", "ToyVAE",
    "adam_step", "all_states", "apply_scalar", "apply_vector", "build_context",
    "cv_variance_grad", "dense_generator", "estimate", "forward", "train",
    "variance_probe", "vjp",
]
