"""Exponential moments of hitting times: Feynman-Kac solves and Monte Carlo.

w(x) = E_x exp(int_0^{T_U} theta h(X_s) ds) solves (-L - theta h) w = 0 off U
with w = 1 on the boundary of U. The finiteness threshold theta*(h, U) is the
bottom of the h-weighted Dirichlet spectrum, located by Sturm counts.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from . import _kernels
from .generator import (DiscreteGenerator, build_generator, dirichlet_restriction,
                        kth_eigenvalue, sturm_count)
from .scenario import Scenario

CHUNK = 2048
TABLE_SIZE = 65537


class ThresholdError(ValueError):
    """theta at or beyond the finiteness threshold."""


@dataclass(frozen=True)
class MomentQuery:
    U: tuple
    theta: float
    h: Callable | np.ndarray | None = None   # None means h = 1
    x0: float | None = None
    h_tag: str = "1"

    def __post_init__(self):
        lo, hi = self.U
        if not hi > lo:
            raise ValueError("U must be a nonempty interval")
        if not self.theta > 0:
            raise ValueError("theta must be > 0")


def _weights(gen, h, idx=None):
    x = gen.x if idx is None else gen.x[idx]
    if h is None:
        w = np.ones_like(x)
    elif callable(h):
        w = np.broadcast_to(np.asarray(h(x), dtype=float), x.shape).copy()
    else:
        w = np.asarray(h, dtype=float)
        w = w if idx is None else w[idx]
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("h must be finite and >= 0")
    return w


def critical_theta(gen: DiscreteGenerator, U, h=None) -> float:
    """theta*(h, U): smallest theta with -L w = theta h w solvable off U.

    Equivalent to the first theta at which the resolvent of -L - theta h
    stops being positive; located by Sturm counts on the symmetrised system.
    """
    R = dirichlet_restriction(gen, U)
    w = _weights(gen, h, R.idx)
    if not np.any(w > 0):
        raise ValueError("h vanishes on the whole complement of U: theta* = inf")
    zero = w == 0
    if zero.any():
        runs = np.diff(np.concatenate([[0], zero.astype(int), [0]]))
        longest = int(np.max(np.flatnonzero(runs == -1) - np.flatnonzero(runs == 1)))
        if longest >= 2:
            warnings.warn(f"h vanishes on {longest} consecutive exterior nodes: "
                          "weighted eigenproblem degenerate there", stacklevel=2)
    return kth_eigenvalue(R.s_diag, R.s_off, 0, weight=w)


def fk_moment(gen: DiscreteGenerator, query: MomentQuery, return_full: bool = True):
    """Feynman-Kac solution on the grid; equals 1 on the closure of U."""
    R = dirichlet_restriction(gen, query.U)
    w = _weights(gen, query.h, R.idx)
    th = query.theta
    if sturm_count(R.s_diag - th * w, R.s_off) > 0:
        raise ThresholdError(f"theta = {th:g} >= theta*(h, U) = {critical_theta(gen, query.U, query.h):g}")
    sol = solve_banded((1, 1), R.banded(-th * w), R.bcoef)
    if np.any(sol < 1 - 1e-9):
        raise ThresholdError("Feynman-Kac solution lost positivity (theta too close to theta*)")
    out = np.ones(gen.n)
    out[R.idx] = sol
    if query.x0 is not None and not return_full:
        return float(np.interp(query.x0, gen.x, out))
    return out


def fk_residual(gen: DiscreteGenerator, query: MomentQuery, w_full) -> dict:
    R = dirichlet_restriction(gen, query.U)
    hw = _weights(gen, query.h, R.idx)
    sol = np.asarray(w_full)[R.idx]
    r = R.apply(sol, 1.0) + query.theta * hw * sol
    rn = float(np.max(np.abs(r)))
    anorm = float(np.max(R.s_diag + query.theta * hw + R.lower + R.upper))
    return {"relative": rn / float(np.max(R.bcoef)),
            "backward": rn / (anorm * float(np.max(np.abs(sol))) + float(np.max(R.bcoef)))}


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass
class MCEstimate:
    estimate: float
    stderr: float
    n_paths: int
    dt: float
    truncation_hits: int
    seed: int
    x0: float
    theta: float
    h_tag: str = "1"
    capped: int = 0
    time_cap: float = math.inf
    tail_index: float = math.inf
    flagged_divergent: bool = False
    bridge: bool = False
    mean_steps: float = 0.0
    backend: str = ""
    notes: list = field(default_factory=list)

    CSV_FIELDS = ("x", "theta", "h_tag", "estimate", "stderr", "n_paths", "dt",
                  "truncation_hits", "seed")

    def csv_row(self) -> dict:
        return {"x": self.x0, "theta": self.theta, "h_tag": self.h_tag,
                "estimate": self.estimate, "stderr": self.stderr, "n_paths": self.n_paths,
                "dt": self.dt, "truncation_hits": self.truncation_hits, "seed": self.seed}


def hill_tail_index(values, frac: float = 0.01, k_min: int = 50) -> float:
    """Hill estimate of the tail index of exp(A) from the exponents A."""
    a = np.sort(np.asarray(values, dtype=float))[::-1]
    k = max(k_min, int(frac * a.size))
    if a.size <= k + 1:
        return math.inf
    gaps = a[:k] - a[k]
    s = float(np.mean(gaps))
    return math.inf if s <= 0 else 1.0 / s


def default_threads() -> int:
    env = os.environ.get("ERGOLAB_THREADS")
    if env:
        return max(1, int(env))
    return 1


def _tables(scenario, h):
    xs = np.linspace(scenario.x_lo, scenario.x_hi, TABLE_SIZE)
    drift = np.ascontiguousarray(scenario.potential.dV(xs), dtype=float)
    if h is None:
        wt = np.ones_like(xs)
    elif callable(h):
        wt = np.broadcast_to(np.asarray(h(xs), dtype=float), xs.shape).copy()
    else:
        raise TypeError("Monte Carlo needs h as a callable (or None for h = 1)")
    return xs, drift, np.ascontiguousarray(wt)


def mc_moment(scenario: Scenario, query: MomentQuery, n_paths: int = 100_000,
              dt: float = 1e-3, seed: int = 0, *, threads: int | None = None,
              bridge: bool = False, time_cap: float | None = None,
              theta_star: float | None = None) -> MCEstimate:
    """Euler-Maruyama estimate of E_x exp(int_0^{T_U} theta h(X_s) ds).

    Paths reflect at the outer truncation boundary. Paths are processed in
    fixed blocks and reduced in path order, so the result does not depend
    on the number of threads.
    """
    if n_paths < 1000:
        raise ValueError("n_paths must be >= 1000")
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if query.x0 is None:
        raise ValueError("Monte Carlo needs a start point x0")
    lo, hi = map(float, query.U)
    if not (scenario.x_lo < lo and hi < scenario.x_hi):
        raise ValueError("U must lie strictly inside the domain")
    notes = []
    if time_cap is None:
        if theta_star is None:
            gen = build_generator(scenario, 1024)
            theta_star = critical_theta(gen, query.U)
        time_cap = 50.0 / theta_star
    max_steps = int(math.ceil(time_cap / dt))
    xs, drift, wt = _tables(scenario, query.h)
    threads = threads or default_threads()

    a = np.empty(n_paths)
    steps = np.empty(n_paths, dtype=np.int64)
    status = np.empty(n_paths, dtype=np.int8)
    refl = np.empty(n_paths, dtype=np.int8)
    blocks = [(s, min(s + CHUNK, n_paths)) for s in range(0, n_paths, CHUNK)]

    def work(block):
        s, e = block
        _kernels.em_paths(float(query.x0), lo, hi, scenario.x_lo, scenario.x_hi, float(dt),
                          max_steps, drift, wt, float(xs[0]), float(xs[1] - xs[0]),
                          float(query.theta), int(seed) & 0xFFFFFFFFFFFFFFFF, s, e,
                          int(bool(bridge)), a[s:e], steps[s:e], status[s:e], refl[s:e])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(work, blocks))
    else:
        for b in blocks:
            work(b)

    vals = np.exp(a)
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(n_paths))
    capped = int(np.count_nonzero(status == 0))
    kappa = hill_tail_index(a[status == 1]) if query.theta > 0 else math.inf
    flagged = False
    if capped > 0.01 * n_paths:
        flagged = True
        notes.append(f"{capped} paths reached the time cap {time_cap:g}: possibly divergent moment")
    if kappa <= 1.0:
        flagged = True
        notes.append(f"tail index of exp(A) estimated at {kappa:.3g} <= 1: possibly divergent moment")
    return MCEstimate(est, se, n_paths, dt, int(np.count_nonzero(refl)), int(seed),
                      float(query.x0), float(query.theta), query.h_tag, capped, time_cap,
                      kappa, flagged, bool(bridge), float(np.mean(steps)), _kernels.BACKEND,
                      notes)


# ---------------------------------------------------------------------------
# L^p membership


@dataclass(frozen=True)
class LpMembership:
    verdict: str          # "finite" or "infinite-at-truncation"
    value: float          # int W^p dmu at the base truncation
    value_extended: float  # same at 1.5 x the radius
    relative_change: float
    theta_star: float
    p: float


def lp_integral(gen: DiscreteGenerator, U, theta: float, p: float) -> float:
    w = fk_moment(gen, MomentQuery(tuple(U), theta / p))
    return float(np.dot(gen.m, w ** p))


def lp_membership_of_moment(scenario: Scenario, gen: DiscreteGenerator, U, theta: float,
                            p: float, *, factor: float = 1.5, rtol: float = 1e-2) -> LpMembership:
    """Is x -> E_x exp((theta/p) T_U) in L^p(mu)? Compared between the base
    truncation and a domain ``factor`` times wider (same grid spacing)."""
    if not p >= 1:
        raise ValueError("p must be >= 1")
    ts = critical_theta(gen, U)
    if theta / p >= ts:
        raise ThresholdError(f"theta/p = {theta / p:g} >= theta*(1, U) = {ts:g}")
    v0 = lp_integral(gen, U, theta, p)
    big = scenario.with_radius(factor * scenario.radius)
    gen2 = build_generator(big, int(round(gen.N * factor)))
    v1 = lp_integral(gen2, U, theta, p)
    rel = abs(v1 - v0) / v0
    verdict = "finite" if rel < rtol else "infinite-at-truncation"
    return LpMembership(verdict, v0, v1, rel, ts, p)


def strong_markov_check(gen: DiscreteGenerator, U, R: float, lam: float) -> dict:
    """E_x e^{lam T_U} <= sup_{|y| = R} E_y e^{lam T_U} * E_x e^{lam T_R} for
    |x| >= R, with U inside H_R = (-R, R)."""
    wU = fk_moment(gen, MomentQuery(tuple(U), lam))
    wR = fk_moment(gen, MomentQuery((-R, R), lam))
    sup_b = float(np.max(np.interp([-R, R], gen.x, wU)))
    out = np.abs(gen.x) >= R
    lhs, rhs = wU[out], sup_b * wR[out]
    slack = float(np.min((rhs - lhs) / rhs))
    return {"sup_boundary": sup_b, "worst_relative_slack": slack}
