"""Run configuration, named random streams, and trace rows."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .estimators import ESTIMATORS
from .stein import KINDS, SteinOperator
from .surrogates import MODES

TASKS = ("quadratic", "toyvae")
DEFAULT_LR_ETA = {"quadratic": 1e-2, "toyvae": 1e-3}
SEED_ENV = "STEINGRAD_SEED"

# stream ids are part of the reproducibility contract; append, never renumber
STREAMS = {"sampling": 0, "init": 1, "probe": 2, "task": 3, "minibatch": 4, "cv_init": 5}


def default_seed() -> int:
    return int(os.environ.get(SEED_ENV, 0))


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent counter-based generator for one named purpose of a run."""
    ss = np.random.SeedSequence(seed, spawn_key=(STREAMS[name],))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class RunConfig:
    task: str = "quadratic"
    estimator: str = "rodeo"
    operator: str = "gibbs"
    surrogate_mode: str = "leave_one_out"
    K: int = 2
    dim: int = 10
    steps: int = 1000
    lr_eta: float | None = None
    lr_gamma: float = 1e-3
    epsilon: float = 0.0
    seed: int = field(default_factory=default_seed)
    out_path: str = "trace.csv"
    variance_probe_every: int = 0
    variance_probe_samples: int = 1000
    adapt_gamma: bool = True
    hidden: int = 100
    batch_size: int = 20
    n_data: int = 200
    standardize_f: bool = False
    wall_clock: bool = True

    def __post_init__(self):
        self.validate()

    @property
    def eta_lr(self) -> float:
        return DEFAULT_LR_ETA[self.task] if self.lr_eta is None else self.lr_eta

    @property
    def uses_cv(self) -> bool:
        return self.estimator in ("reinforce_stein", "rodeo")

    def stein_operator(self) -> SteinOperator:
        return SteinOperator(self.operator, self.epsilon)

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ValueError(msg)

        need(self.task in TASKS, f"task must be one of {TASKS}")
        need(self.estimator in ESTIMATORS, f"estimator must be one of {ESTIMATORS}")
        need(self.operator in KINDS, f"operator must be one of {KINDS}")
        need(self.surrogate_mode in MODES, f"surrogate_mode must be one of {MODES}")
        need(self.K >= 1, "K >= 1 is required")
        if self.estimator != "reinforce":
            need(self.K >= 2, f"estimator {self.estimator} requires K ≥ 2 (got K={self.K})")
        need(self.dim >= 1, "dim must be positive")
        need(self.steps >= 0, "steps must be non-negative")
        need(self.lr_eta is None or self.lr_eta > 0, "lr_eta must be positive")
        need(self.lr_gamma > 0, "lr_gamma must be positive")
        need(self.epsilon >= 0, "epsilon must be non-negative")
        need(self.variance_probe_every >= 0, "variance_probe_every must be non-negative")
        if self.variance_probe_every:
            need(self.variance_probe_samples >= 2, "variance_probe_samples must be at least 2")
        need(self.hidden >= 1, "hidden must be positive")
        need(self.batch_size >= 1 and self.n_data >= 1, "batch_size and n_data must be positive")
        need(isinstance(self.seed, int) and self.seed >= 0, "seed must be a non-negative integer")
        SteinOperator(self.operator, self.epsilon)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        """Hash of everything that affects the trace (the output path does not)."""
        d = self.to_dict()
        d.pop("out_path")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


TRACE_COLUMNS = ("step", "objective", "grad_trace_variance", "variance_stderr",
                 "f_eval_count", "net_eval_count", "wall_seconds")


@dataclass
class TraceRecord:
    step: int
    objective: float
    grad_trace_variance: float | None = None
    variance_stderr: float | None = None
    f_eval_count: int = 0
    net_eval_count: int = 0
    wall_seconds: float = 0.0

    def csv_row(self) -> str:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return "nan" if math.isnan(v) else repr(v)
            return str(v)

        return ",".join(fmt(getattr(self, c)) for c in TRACE_COLUMNS)
