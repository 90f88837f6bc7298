import json

import numpy as np
import pytest

from steingrad.config import RunConfig, TraceRecord, default_seed, rng_stream


def test_defaults():
    cfg = RunConfig()
    assert cfg.eta_lr == 1e-2 and RunConfig(task="toyvae", dim=8).eta_lr == 1e-3
    assert cfg.lr_gamma == 1e-3 and cfg.epsilon == 0.0


@pytest.mark.parametrize("bad", [
    dict(estimator="rodeo", K=1), dict(estimator="rloo", K=1), dict(task="mnist"),
    dict(operator="stein"), dict(surrogate_mode="x"), dict(lr_gamma=0.0), dict(epsilon=-1e-3),
    dict(steps=-1), dict(variance_probe_every=5, variance_probe_samples=1), dict(seed=-2),
])
def test_validation(bad):
    with pytest.raises(ValueError):
        RunConfig(**bad)


def test_k1_message_names_constraint():
    with pytest.raises(ValueError, match="K ≥ 2"):
        RunConfig(estimator="rodeo", K=1)
    RunConfig(estimator="reinforce", K=1)


def test_dict_roundtrip():
    cfg = RunConfig(estimator="rloo", K=3, epsilon=1e-3, operator="mpf")
    back = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg and back.digest() == cfg.digest()
    with pytest.raises(ValueError):
        RunConfig.from_dict({"bogus": 1})


def test_digest_ignores_out_path():
    assert RunConfig(out_path="a.csv").digest() == RunConfig(out_path="b.csv").digest()
    assert RunConfig(seed=1).digest() != RunConfig(seed=2).digest()


def test_seed_env(monkeypatch):
    monkeypatch.setenv("STEINGRAD_SEED", "41")
    assert default_seed() == 41 and RunConfig().seed == 41
    assert RunConfig(seed=3).seed == 3


def test_streams_independent_and_reproducible():
    a, b = rng_stream(0, "sampling").random(4), rng_stream(0, "sampling").random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, rng_stream(0, "probe").random(4))
    assert not np.array_equal(a, rng_stream(1, "sampling").random(4))


def test_trace_row_format():
    assert TraceRecord(3, -1.5, None, None, 6, 66, 0.0).csv_row() == "3,-1.5,,,6,66,0.0"
    assert TraceRecord(1, 0.25, 0.1, 0.01, 2, 0).csv_row() == "1,0.25,0.1,0.01,2,0,0.0"
