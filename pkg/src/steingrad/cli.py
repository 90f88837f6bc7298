"""Command-line driver: ``steingrad run | check | compare``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .checks import SUITES, run_suite
from .config import TRACE_COLUMNS, RunConfig
from .estimators import ESTIMATORS
from .tasks import NumericalError, train


def version_string() -> str:
    """``<version>-g<commit>[-dirty]`` when run from a git checkout, else the version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}-g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def summary_path(out_path) -> Path:
    return Path(out_path).with_suffix(".json")


def write_trace(path, config: RunConfig, rows):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    with open(path, "w") as fh:
        fh.write(f"# steingrad trace version={version_string()} config_hash={config.digest()} "
                 f"seed={config.seed}\n")
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for row in rows:
            fh.write(row.csv_row() + "\n")


def read_trace(path):
    """Trace rows as a list of dicts (numeric values, ``None`` for blanks)."""
    rows = []
    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh if not line.startswith("#")]
    header = lines[0].split(",")
    for line in lines[1:]:
        row = {}
        for key, val in zip(header, line.split(",")):
            row[key] = None if val == "" else (int(val) if key.endswith("count") or key == "step"
                                               else float(val))
        rows.append(row)
    return rows


def summarize(config: RunConfig, rows, final_objective, status="ok") -> dict:
    probes = [r.grad_trace_variance for r in rows if r.grad_trace_variance is not None]
    last = probes[-10:]
    return {
        "status": status,
        "steps_completed": len(rows),
        "final_objective": final_objective,
        "mean_variance_last_10_probes": float(np.mean(last)) if last else None,
        "config": config.to_dict(),
        "config_hash": config.digest(),
        "version": version_string(),
    }


def execute(config: RunConfig):
    """Train, write the trace and summary; return ``(summary, exit_code)``."""
    try:
        result = train(config)
    except NumericalError as err:
        write_trace(config.out_path, config, err.trace)
        summary = summarize(config, err.trace, None, status=f"aborted: {err}")
        summary_path(config.out_path).write_text(json.dumps(summary, indent=2, sort_keys=True))
        return summary, 3
    final = result.final_objective
    write_trace(config.out_path, config, result.trace)
    summary = summarize(config, result.trace, final)
    summary_path(config.out_path).write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary, 0


# --------------------------------------------------------------------------
# argument handling

_FLAG_TYPES = {
    "task": str, "estimator": str, "operator": str, "surrogate_mode": str,
    "K": int, "dim": int, "steps": int, "lr_eta": float, "lr_gamma": float,
    "epsilon": float, "seed": int, "out_path": str, "variance_probe_every": int,
    "variance_probe_samples": int, "hidden": int, "batch_size": int, "n_data": int,
}
_BOOL_FLAGS = ("adapt_gamma", "standardize_f", "wall_clock")


def _add_config_flags(p):
    p.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    for name, typ in _FLAG_TYPES.items():
        flag = "--" + name.lower().replace("_", "-")
        p.add_argument(flag, dest=name, type=typ, default=None)
    for name in _BOOL_FLAGS:
        p.add_argument("--" + name.replace("_", "-"), dest=name,
                       action=argparse.BooleanOptionalAction, default=None)


def config_from_args(args, **overrides) -> RunConfig:
    values = {}
    if args.config:
        with open(args.config) as fh:
            values.update(json.load(fh))
    for name in list(_FLAG_TYPES) + list(_BOOL_FLAGS):
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    values.update(overrides)
    return RunConfig.from_dict(values)


def cmd_run(args) -> int:
    config = config_from_args(args)
    summary, code = execute(config)
    print(f"{summary['status']}: {summary['steps_completed']} steps, "
          f"final objective {summary['final_objective']}, trace -> {config.out_path}")
    return code


def cmd_check(args) -> int:
    failed = False
    print(f"suite: {args.suite}")
    for row in run_suite(args.suite):
        print(row.line())
        failed |= not row.passed
    print("FAILED" if failed else "all checks passed")
    return 1 if failed else 0


def _replicate(config: RunConfig):
    result = train(config)
    probes = [r.grad_trace_variance for r in result.trace if r.grad_trace_variance is not None]
    log_var = float(np.mean(np.log10(probes))) if probes else math.nan
    return result.final_objective, log_var


def compare_runs(base: RunConfig, estimators, replicates: int, jobs: int = 1):
    """Mean final objective and log10 variance per estimator over paired seeds."""
    if replicates < 3:
        raise ValueError("compare needs at least 3 replicates")
    if not base.variance_probe_every:
        base = dataclasses.replace(base, variance_probe_every=max(base.steps, 1))
    configs = [dataclasses.replace(base, estimator=est, seed=base.seed + r)
               for est in estimators for r in range(replicates)]
    for c in configs:
        c.validate()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_replicate, configs))
    else:
        results = [_replicate(c) for c in configs]
    table = []
    for i, est in enumerate(estimators):
        chunk = results[i * replicates:(i + 1) * replicates]
        obj = np.array([c[0] for c in chunk])
        lv = np.array([c[1] for c in chunk])
        table.append({
            "estimator": est,
            "final_objective_mean": float(obj.mean()),
            "final_objective_se": float(obj.std(ddof=1) / math.sqrt(len(obj))),
            "log10_variance_mean": float(lv.mean()),
            "log10_variance_se": float(lv.std(ddof=1) / math.sqrt(len(lv))),
            "finals": obj.tolist(),
        })
    return table


def format_table(table) -> str:
    lines = [f"{'estimator':<16s} {'final objective':>22s} {'log10 Var':>18s}"]
    for row in table:
        lines.append(f"{row['estimator']:<16s} "
                     f"{row['final_objective_mean']:>12.4f} ± {row['final_objective_se']:<7.4f} "
                     f"{row['log10_variance_mean']:>9.3f} ± {row['log10_variance_se']:<6.3f}")
    return "\n".join(lines)


def cmd_compare(args) -> int:
    base = config_from_args(args)
    estimators = args.estimators.split(",")
    for est in estimators:
        if est not in ESTIMATORS:
            raise ValueError(f"unknown estimator {est!r}")
    table = compare_runs(base, estimators, args.replicates, args.jobs)
    print(format_table(table))
    if args.summary:
        Path(args.summary).write_text(json.dumps(
            {"config": base.to_dict(), "replicates": args.replicates, "rows": table,
             "version": version_string()}, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steingrad", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train once and write a trace")
    _add_config_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check", help="run an exact-enumeration verification suite")
    p_check.add_argument("suite", choices=SUITES)
    p_check.set_defaults(func=cmd_check)

    p_cmp = sub.add_parser("compare", help="replicate runs across estimators")
    _add_config_flags(p_cmp)
    p_cmp.add_argument("--estimators", default="rloo,rodeo")
    p_cmp.add_argument("--replicates", type=int, default=5)
    p_cmp.add_argument("--jobs", type=int, default=1)
    p_cmp.add_argument("--summary", help="write the table as JSON here")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as err:
        print(f"steingrad {args.command}: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
