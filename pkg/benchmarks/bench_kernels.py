"""Compiled core vs numpy fallback on the hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Reports the best-of-``repeat`` wall time per kernel and the speed-up, and
checks that both backends return identical results on the benchmark input.
"""

import argparse
import json
import time

import numpy as np

from ergolab._kernels import _fallback
from ergolab.generator import build_generator
from ergolab.hitting import TABLE_SIZE
from ergolab.scenario import Quadratic, build_scenario

try:
    from ergolab._kernels import _core
except ImportError:  # pragma: no cover
    _core = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(n_paths):
    sc = build_scenario(Quadratic(1.0))
    g = build_generator(sc, 8192)
    d, e2, w = g.s_diag, g.s_off ** 2, np.ones(g.n)
    shifts = np.linspace(0.0, 50.0, 64)

    def sturm(mod):
        return lambda: [mod.sturm_count(d, e2, w, float(s), 1e-300) for s in shifts]

    counters = np.arange(2_000_000, dtype=np.uint64)

    def unif(mod):
        return lambda: np.asarray(mod.uniforms(12345, 7, counters))

    xs = np.linspace(sc.x_lo, sc.x_hi, TABLE_SIZE)
    drift = np.ascontiguousarray(sc.potential.dV(xs))
    wt = np.ones_like(xs)

    def em(mod):
        def f():
            out = (np.empty(n_paths), np.empty(n_paths, np.int64),
                   np.empty(n_paths, np.int8), np.empty(n_paths, np.int8))
            mod.em_paths(2.0, -1.0, 1.0, sc.x_lo, sc.x_hi, 1e-3, 100_000, drift, wt,
                         float(xs[0]), float(xs[1] - xs[0]), 1.6, 0, 0, n_paths, 0, *out)
            return out[0]
        return f

    return {"sturm_count (N=8192, 64 shifts)": sturm,
            "uniforms (2e6 draws)": unif,
            f"em_paths ({n_paths} paths, dt=1e-3)": em}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--paths", type=int, default=2048)
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args(argv)
    if _core is None:
        raise SystemExit("compiled core not built: pip install -e . --no-build-isolation")
    rows = []
    print(f"{'kernel':<34} {'cython [s]':>11} {'python [s]':>11} {'speed-up':>9}  same")
    for name, make in cases(args.paths).items():
        tc, oc = best_of(make(_core), args.repeat)
        tp, op = best_of(make(_fallback), args.repeat)
        same = bool(np.array_equal(np.asarray(oc), np.asarray(op)))
        rows.append({"kernel": name, "cython_s": tc, "python_s": tp, "speedup": tp / tc,
                     "identical": same})
        print(f"{name:<34} {tc:11.4f} {tp:11.4f} {tp / tc:9.1f}  {same}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
