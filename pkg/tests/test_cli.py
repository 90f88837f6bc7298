import json
import subprocess
import sys

import pytest

from steingrad import cli
from steingrad.config import TRACE_COLUMNS


def run_cli(*args):
    return cli.main([str(a) for a in args])


def test_run_writes_trace_and_summary(tmp_path):
    out = tmp_path / "t.csv"
    code = run_cli("run", "--task", "quadratic", "--estimator", "rloo", "--k", 2, "--dim", 10,
                   "--steps", 1000, "--seed", 0, "--out-path", out)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# steingrad trace") and "config_hash=" in lines[0]
    assert lines[1] == ",".join(TRACE_COLUMNS)
    assert len(lines) == 1002
    rows = cli.read_trace(out)
    assert [r["step"] for r in rows] == list(range(1, 1001))
    summary = json.loads(out.with_suffix(".json").read_text())
    assert summary["final_objective"] == rows[-1]["objective"]
    assert summary["config"]["estimator"] == "rloo"
    assert summary["version"].startswith("0.1.0")


def test_run_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.csv"
        assert run_cli("run", "--estimator", "rodeo", "--steps", 60, "--variance-probe-every", 20,
                       "--variance-probe-samples", 100, "--no-wall-clock", "--out-path", out) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_k1_rejected(tmp_path, capsys):
    code = run_cli("run", "--estimator", "rodeo", "--k", 1, "--out-path", tmp_path / "x.csv")
    assert code != 0
    assert "K ≥ 2" in capsys.readouterr().err
    assert not (tmp_path / "x.csv").exists()


def test_config_file_with_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"estimator": "rloo", "steps": 7, "dim": 4}))
    out = tmp_path / "o.csv"
    assert run_cli("run", "--config", cfg, "--steps", 5, "--out-path", out) == 0
    summary = json.loads(out.with_suffix(".json").read_text())
    assert summary["config"]["steps"] == 5 and summary["config"]["dim"] == 4
    assert summary["steps_completed"] == 5


def test_summary_roundtrip(tmp_path):
    out = tmp_path / "o.csv"
    run_cli("run", "--steps", 20, "--variance-probe-every", 10, "--variance-probe-samples", 50,
            "--out-path", out)
    text = out.with_suffix(".json").read_text()
    doc = json.loads(text)
    assert json.loads(json.dumps(doc)) == doc
    assert json.dumps(doc, indent=2, sort_keys=True) == text
    assert doc["mean_variance_last_10_probes"] > 0


def test_seed_env_and_flag(tmp_path, monkeypatch):
    monkeypatch.setenv("STEINGRAD_SEED", "7")
    out = tmp_path / "o.csv"
    run_cli("run", "--steps", 2, "--out-path", out)
    assert json.loads(out.with_suffix(".json").read_text())["config"]["seed"] == 7
    run_cli("run", "--steps", 2, "--seed", 3, "--out-path", out)
    assert json.loads(out.with_suffix(".json").read_text())["config"]["seed"] == 3


def test_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run_cli("run", "--steps", 2, "--out-path", blocker / "sub" / "t.csv") != 0
    assert "error" in capsys.readouterr().err


def test_numerical_abort_flushes(tmp_path, monkeypatch):
    import numpy as np

    from steingrad.tasks import QuadraticTask

    orig = QuadraticTask.f_and_grad
    calls = {"n": 0}

    def flaky(self, x):
        calls["n"] += 1
        f, g = orig(self, x)
        return (f * np.nan if calls["n"] == 4 else f), g

    monkeypatch.setattr(QuadraticTask, "f_and_grad", flaky)
    out = tmp_path / "t.csv"
    assert run_cli("run", "--estimator", "rloo", "--steps", 10, "--out-path", out) == 3
    assert len(cli.read_trace(out)) == 3
    assert json.loads(out.with_suffix(".json").read_text())["status"].startswith("aborted")


def test_check_operators(capsys):
    assert run_cli("check", "operators") == 0
    text = capsys.readouterr().out
    for kind in ("gibbs", "mpf", "birthdeath", "difference"):
        assert f"PASS  {kind}: max |A^T q|" in text


def test_compare_table(tmp_path, capsys):
    summary = tmp_path / "cmp.json"
    code = run_cli("compare", "--estimators", "rloo,rodeo", "--replicates", 3, "--steps", 50,
                   "--variance-probe-samples", 200, "--summary", summary)
    assert code == 0
    text = capsys.readouterr().out
    assert "rloo" in text and "rodeo" in text and "±" in text
    rows = json.loads(summary.read_text())["rows"]
    assert [r["estimator"] for r in rows] == ["rloo", "rodeo"]
    assert all(len(r["finals"]) == 3 for r in rows)


def test_compare_single_estimator_and_parallel():
    base = cli.RunConfig(steps=20, variance_probe_samples=100)
    serial = cli.compare_runs(base, ["rloo"], 3)
    parallel = cli.compare_runs(base, ["rloo"], 3, jobs=2)
    assert len(serial) == 1 and serial == parallel


def test_compare_needs_three_replicates():
    with pytest.raises(ValueError):
        cli.compare_runs(cli.RunConfig(steps=2), ["rloo"], 2)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "steingrad", "run", "--k", "1"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 2 and "K ≥ 2" in proc.stderr
