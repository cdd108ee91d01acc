"""Command line: ``ergolab run <config.json>`` and ``ergolab list``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .pipelines import PIPELINES, ConfigError
from .scenario import ScenarioError, scenario_from_dict

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2
TOP_KEYS = {"experiment", "scenario", "knobs", "output", "seed", "threads", "expect"}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, rows: list) -> None:
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])


def write_plot(path: Path, x, y, labels) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(labels)
        for a, b in zip(np.asarray(x, float).tolist(), np.asarray(y, float).tolist()):
            w.writerow([repr(a), repr(b)])


def load_config(path) -> tuple[dict, Path]:
    path = Path(path)
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    extra = sorted(set(cfg) - TOP_KEYS)
    if extra:
        raise ConfigError(f"unknown config key(s): {', '.join(extra)}")
    tag = cfg.get("experiment")
    if tag not in PIPELINES:
        raise ConfigError(f"experiment must be one of {sorted(PIPELINES)}, got {tag!r}")
    return cfg, path.parent


def resolve(cfg: dict, base_dir: Path):
    """Pipeline, scenario (or None) and the knob dict with defaults filled in."""
    p = PIPELINES[cfg["experiment"]]
    knobs = cfg.get("knobs", {}) or {}
    if not isinstance(knobs, dict):
        raise ConfigError("knobs must be an object")
    extra = sorted(set(knobs) - set(p.defaults))
    if extra:
        raise ConfigError(f"unknown knob(s) for {p.tag}: {', '.join(extra)}")
    kn = {**p.defaults, **knobs}
    spec = cfg.get("scenario", p.default_scenario)
    sc = None
    if spec is not None:
        try:
            sc = scenario_from_dict(spec, base_dir=base_dir)
        except ScenarioError as exc:
            raise ConfigError(f"scenario: {exc}") from None
    return p, sc, kn


def _lookup(summary, dotted):
    cur = summary
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return None
        cur = cur[part]
    return cur


def run(config_path, out=None, seed=None, threads=None, stream=None) -> int:
    stream = stream or sys.stdout
    try:
        cfg, base = load_config(config_path)
        p, sc, kn = resolve(cfg, base)
        seed = int(seed if seed is not None else cfg.get("seed", 0))
        env = os.environ.get("ERGOLAB_THREADS")
        for cand in (threads, cfg.get("threads"), env, 1):
            if cand is not None:
                threads = int(cand)
                break
        if threads < 1:
            raise ConfigError("threads must be >= 1")
        out = Path(out or cfg.get("output") or f"ergolab-{p.tag}")
        expect = cfg.get("expect", {}) or {}
        if not isinstance(expect, dict):
            raise ConfigError("expect must be an object")
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        res = p.run(sc, kn, seed, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, ArithmeticError, AssertionError) as exc:
        print(f"{p.tag}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CHECK

    checks = dict(res.checks)
    summary = _clean(res.summary)
    for key, want in sorted(expect.items()):
        got = _lookup(summary, key)
        checks[f"expect:{key}"] = got == want
    summary = {
        "experiment": p.tag,
        "scenario": _clean(sc.to_dict()) if sc is not None else None,
        "knobs": _clean(kn),
        "seed": seed,
        "statements": list(p.statements),
        "results": summary,
        "checks": {k: bool(v) for k, v in sorted(checks.items())},
        "passed": all(checks.values()),
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "plotdata").mkdir(exist_ok=True)
    with open(out / "summary.json", "w", newline="\n") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    write_csv(out / "results.csv", res.rows)
    for name, (x, y, labels) in sorted(res.plots.items()):
        write_plot(out / "plotdata" / f"{name}.csv", x, y, labels)
    for k, v in sorted(checks.items()):
        print(f"{'PASS' if v else 'FAIL'}  {k}", file=stream)
    print(f"{p.tag}: {'all checks passed' if summary['passed'] else 'check failure'} "
          f"-> {out}", file=stream)
    return EXIT_OK if summary["passed"] else EXIT_CHECK


def list_experiments(as_json: bool = False) -> str:
    if as_json:
        return json.dumps([{"tag": p.tag, "description": p.description}
                           for p in PIPELINES.values()], indent=2)
    width = max(len(t) for t in PIPELINES)
    return "\n".join(f"{p.tag:<{width}}  {p.description}" for p in PIPELINES.values())


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="ergolab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory")
    r.add_argument("--seed", type=int)
    r.add_argument("--threads", type=int, help="worker threads (default: ERGOLAB_THREADS or 1)")
    ls = sub.add_parser("list", help="list experiment tags")
    ls.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)
    if args.cmd == "list":
        print(list_experiments(args.json))
        return EXIT_OK
    return run(args.config, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
