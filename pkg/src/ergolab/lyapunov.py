"""Drift certificates and resolvent constructions of Lyapunov functions.

A certificate checks LW <= -phi2 W + b 1_U pointwise on the grid (lambda is
folded into phi2 unless given separately). The constructions solve
(-L + phi) v = 1 for a potential term phi that makes the quadratic form
coercive; the minimum principle then gives v > 0 and the drift inequality
off the exceptional set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .fenchel import FSpec, fenchel_dual
from .generator import (DiscreteGenerator, NotCoerciveError, resolvent_residual,
                        resolvent_solve, spectral_gap)
from .scenario import Scenario, measure_of_set

DRIFT_RTOL = 1e-9


class ExpPower:
    """Closed-form candidate W = exp(a |x|^p), p >= 1 (p = 2 smooth at 0)."""

    def __init__(self, a: float, p: float = 2.0):
        if not (a > 0 and p >= 1):
            raise ValueError("need a > 0 and p >= 1")
        self.a, self.p = float(a), float(p)

    @property
    def tag(self) -> str:
        return f"exp({self.a:g}|x|^{self.p:g})"

    def log_W(self, x):
        return self.a * np.abs(np.asarray(x, dtype=float)) ** self.p

    def _d(self, x):
        x = np.asarray(x, dtype=float)
        a, p = self.a, self.p
        ax = np.abs(x)
        d1 = a * p * np.sign(x) * ax ** (p - 1)
        with np.errstate(divide="ignore"):
            d2 = np.zeros_like(x) if p == 1 else a * p * (p - 1) * ax ** (p - 2)
        return d1, d2

    def ratio(self, potential, x):
        """LW/W = (ln W)'' + (ln W)'^2 - V'(ln W)'."""
        d1, d2 = self._d(x)
        return d2 + d1 * d1 - potential.dV(x) * d1

    def log_neg_ratio(self, potential, lx):
        """ln(-LW/W) at x = e^lx (x > 0) for very large x; nan where LW >= 0."""
        a, p = self.a, self.p
        lx = np.asarray(lx, dtype=float)
        ldv = potential.log_dV(lx)
        lead = math.log(a * p) + (p - 1) * lx + ldv
        corr = np.exp(math.log(a * p) + (p - 1) * lx - ldv)
        if p > 1:
            corr = corr + np.exp(math.log(p - 1) - lx - ldv)
        br = 1.0 - corr
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(br > 0, lead + np.log(br), np.nan)


def _eval_nodes(f, x, name):
    if callable(f):
        out = np.asarray(f(x), dtype=float)
    else:
        out = np.asarray(f, dtype=float)
    out = np.broadcast_to(out, x.shape).astype(float)
    if not np.all(np.isfinite(out)):
        i = int(np.argmax(~np.isfinite(out)))
        raise ValueError(f"{name} not finite at node {i} (x = {x[i]:.6g})")
    return out


def _mask(U, x):
    if U is None:
        return np.zeros(x.shape, dtype=bool)
    U = np.asarray(U)
    if U.dtype == bool:
        if U.shape != x.shape:
            raise ValueError("mask U must match the grid")
        return U.copy()
    U = U.astype(float)
    if U.ndim == 1:
        U = U[None, :]
    m = np.zeros(x.shape, dtype=bool)
    for lo, hi in U:
        m |= (x > lo) & (x < hi)
    return m


def _dilate(mask, k):
    out = mask.copy()
    for _ in range(k):
        out[1:] |= mask[:-1]
        out[:-1] |= mask[1:]
        mask = out.copy()
    return out


def discrete_log_ratio(gen: DiscreteGenerator, log_W) -> np.ndarray:
    """(LW)/W from ln W, overflow-free and invariant under W -> sW."""
    lw = np.asarray(log_W, dtype=float)
    out = np.zeros_like(lw)
    d = np.diff(lw)
    out[:-1] += gen.upper[:-1] * np.expm1(d)
    out[1:] += gen.lower[1:] * np.expm1(-d)
    return out


@dataclass(eq=False)
class DriftCertificate:
    candidate_tag: str
    lam: float
    b: float
    U: list | None
    worst_margin: float
    valid: bool
    grid_N: int
    w_min: float
    tolerance: float
    discrepancy: float | None = None
    argworst: float | None = None
    ratio: np.ndarray = field(default=None, repr=False)       # LW/W used for the verdict
    phi2: np.ndarray = field(default=None, repr=False)        # lambda already applied
    log_W: np.ndarray = field(default=None, repr=False)
    exceptional: np.ndarray = field(default=None, repr=False)  # U plus collar
    x: np.ndarray = field(default=None, repr=False)

    @property
    def b_bar(self) -> float:
        """b / min over the exceptional set of W."""
        if self.exceptional is None or not self.exceptional.any():
            return 0.0
        return self.b * math.exp(-float(np.min(self.log_W[self.exceptional])))

    def to_dict(self) -> dict:
        return {
            "candidate_tag": self.candidate_tag,
            "lambda": self.lam,
            "b": self.b,
            "U": self.U,
            "worst_margin": self.worst_margin,
            "valid": bool(self.valid),
            "grid_N": self.grid_N,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def certify_drift(scenario: Scenario, gen: DiscreteGenerator, W, phi2, U=None, *,
                  lam: float = 1.0, collar: int = 1, closed_form: bool = True,
                  tag: str | None = None) -> DriftCertificate:
    """Check LW <= -lam phi2 W + b 1_U on the grid.

    ``W`` is a positive node array or a closed-form candidate (``ExpPower``).
    ``U`` is an open interval, a list of intervals, a node mask or None.
    The smallest b is taken over U and a collar of ``collar`` nodes around
    it; those nodes are excluded from the margin.
    """
    x = gen.x
    cf = None
    if hasattr(W, "log_W"):
        cf = W
        log_W = cf.log_W(x)
        tag = tag or cf.tag
    else:
        Wn = _eval_nodes(W, x, "W")
        if np.any(Wn <= 0):
            i = int(np.argmax(Wn <= 0))
            raise ValueError(f"W must be > 0 on the grid (W = {Wn[i]:.3g} at x = {x[i]:.6g})")
        log_W = np.log(Wn)
        tag = tag or "grid"
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    phi2n = lam * _eval_nodes(phi2, x, "phi2")
    r_disc = discrete_log_ratio(gen, log_W)
    discrepancy = None
    ratio = r_disc
    if cf is not None:
        r_cf = cf.ratio(scenario.potential, x)
        inner = slice(1, -1)
        discrepancy = float(np.max(np.abs(r_cf[inner] - r_disc[inner])))
        if closed_form:
            ratio = r_cf
    excl = _dilate(_mask(U, x), collar) if U is not None else np.zeros(x.shape, bool)
    q = ratio + phi2n
    b = 0.0
    if excl.any():
        with np.errstate(over="ignore"):
            b = max(0.0, float(np.max(np.exp(log_W[excl]) * q[excl])))
    margin = q.copy()
    if excl.any():
        with np.errstate(over="ignore", invalid="ignore"):
            margin[excl] = q[excl] - b * np.exp(-log_W[excl])
    worst = float(np.max(margin))
    scale = float(np.max(np.abs(ratio))) or 1.0
    tol = DRIFT_RTOL * scale
    hull = None
    if U is not None:
        Ua = np.asarray(U)
        base = _mask(U, x)
        if Ua.dtype != bool and Ua.ndim == 1:
            hull = [float(Ua[0]), float(Ua[1])]
        elif base.any():
            hull = [float(x[base].min()), float(x[base].max())]
    return DriftCertificate(tag, float(lam), b, hull, worst, worst <= tol, gen.N,
                            math.exp(float(np.min(log_W))), tol, discrepancy,
                            float(x[int(np.argmax(margin))]), ratio, phi2n, log_W, excl, x)


# ---------------------------------------------------------------------------
# resolvent constructions


@dataclass(eq=False)
class ResolventLyapunov:
    v: np.ndarray = field(repr=False)
    c: float                       # Poincare construction: the constant c
    rate: np.ndarray | None = field(default=None, repr=False)
    region: np.ndarray | None = field(default=None, repr=False)   # where the rate is certified
    certificate: DriftCertificate | None = None
    b: float | None = None
    rho: float | None = None
    residual: dict | None = None
    min_v: float = 0.0
    margin: float = 0.0            # max over the region of (Lv + rate v)/v
    details: dict = field(default_factory=dict)


def _interval_mask(x, A):
    return (x > A[0]) & (x < A[1])


def construct_poincare_lyapunov(scenario: Scenario, gen: DiscreteGenerator, A,
                                C_P: float | None = None) -> ResolventLyapunov:
    """v solving (-L + 1_A - c) v = 1 with c = mu(A) min(1/(4 C_P), 1/8)."""
    mu_A = measure_of_set(scenario, A)
    if not mu_A > 0:
        raise ValueError("mu(A) must be > 0")
    if C_P is None:
        C_P = 1.0 / spectral_gap(gen, refine=False).value
    if not C_P > 0:
        raise ValueError("C_P must be > 0")
    c = mu_A * min(1.0 / (4.0 * C_P), 1.0 / 8.0)
    x = gen.x
    inA = _interval_mask(x, A)
    phi = inA.astype(float) - c
    v = resolvent_solve(gen, phi, 1.0)
    res = resolvent_residual(gen, phi, 1.0, v)
    if not np.all(v > 0):
        raise ArithmeticError("resolvent solution not positive (minimum principle violated)")
    Lv = gen.apply(v)
    ratio = Lv / v
    off = ~inA
    margin = float(np.max(ratio[off] + c))
    cert = certify_drift(scenario, gen, v, c, A, tag="resolvent(poincare)")
    scale = float(np.max(np.abs(ratio)))
    if margin > 1e-6 * scale:
        raise ArithmeticError(f"Lv <= -c v fails on the complement of A (margin {margin:.3g})")
    return ResolventLyapunov(v, c, np.full(x.shape, c), off, cert, None, None, res,
                             float(v.min()), margin, {"mu_A": mu_A, "C_P": C_P,
                                                      "ratio_norm": scale})


def _integrability_check(gen, log_f, what):
    """Reject if the outer 2% of the domain carries a visible share of the
    integral of f against mu (i.e. the integral is not resolved)."""
    lt = log_f + gen.log_m
    total = float(logsumexp(lt))
    k = max(2, gen.n // 50)
    edge = float(logsumexp(np.concatenate([lt[:k], lt[-k:]])))
    if not np.isfinite(total) or edge - total > math.log(1e-4):
        raise ValueError(f"{what}: h not exponentially integrable at this truncation "
                         f"(edge share {math.exp(min(0.0, edge - total)):.2e})")
    return total


def _resolvent_rate_pipeline(scenario, gen, h, rho, b, eps, tag):
    x = gen.x
    phi = rho * (b - h)
    try:
        v = resolvent_solve(gen, phi, 1.0)
    except NotCoerciveError:
        raise
    res = resolvent_residual(gen, phi, 1.0, v)
    if not np.all(v > 0):
        raise ArithmeticError("resolvent solution not positive (minimum principle violated)")
    region = (1.0 - eps) * h >= b
    rate = eps * rho * np.maximum(h, 0.0)
    cert = certify_drift(scenario, gen, v, np.where(region, rate, 0.0), ~region, tag=tag)
    ratio = gen.apply(v) / v
    margin = float(np.max((ratio + rate)[region])) if region.any() else -math.inf
    return ResolventLyapunov(v, float("nan"), rate, region, cert, b, rho, res,
                             float(v.min()), margin,
                             {"ratio_norm": float(np.max(np.abs(ratio)))})


def construct_entropic_lyapunov(scenario: Scenario, gen: DiscreteGenerator, h, C_LS: float,
                                eps: float = 0.1, rho: float | None = None) -> ResolventLyapunov:
    """phi = rho (b - h), b = 2 mu(e^h), rho = 1/(2 C_LS); the certified rate
    is (eps/(2 C_LS)) h on {(1 - eps) h >= b}."""
    if not C_LS > 0:
        raise ValueError("C_LS must be > 0")
    rho = 1.0 / (2.0 * C_LS) if rho is None else float(rho)
    if 2 * rho > 1.0 / C_LS * (1 + 1e-12):
        raise ValueError("need 2 rho <= 1/C_LS")
    hn = _eval_nodes(h, gen.x, "h")
    log_int = _integrability_check(gen, hn, "mu(e^h)")
    b = 2.0 * math.exp(log_int)
    out = _resolvent_rate_pipeline(scenario, gen, hn, rho, b, eps, "resolvent(entropic)")
    out.details.update({"mu_exp_h": b / 2, "C_LS": C_LS, "eps": eps})
    return out


def construct_fsobolev_lyapunov(scenario: Scenario, gen: DiscreteGenerator, fspec: FSpec, h,
                                eps: float = 0.1) -> ResolventLyapunov:
    """phi = rho (b - h), b = 2 (D_F + mu(G*(h))), rho C_F = 1/2."""
    hn = _eval_nodes(h, gen.x, "h")
    if np.any(hn < 0):
        raise ValueError("h must be >= 0")
    uniq, inv = np.unique(hn, return_inverse=True)
    gs = np.asarray(fenchel_dual(fspec, uniq), dtype=float).reshape(-1)[inv]
    if not np.all(np.isfinite(gs)):
        raise ValueError("G* diverges at a needed argument")
    with np.errstate(divide="ignore"):
        log_gs = np.log(np.maximum(gs, 0.0))
    log_int = _integrability_check(gen, log_gs, "mu(G*(h))")
    mu_g = math.exp(log_int)
    b = 2.0 * (fspec.D_F + mu_g)
    rho = 0.5 / fspec.C_F
    out = _resolvent_rate_pipeline(scenario, gen, hn, rho, b, eps, f"resolvent(F={fspec.tag})")
    out.details.update({"mu_G_star_h": mu_g, "C_F": fspec.C_F, "D_F": fspec.D_F, "eps": eps})
    return out
