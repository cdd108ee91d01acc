"""Exponential integrability of psi^2 under a phi-Lyapunov condition.

Given LW <= -phi^2 W + b 1_C, the weighted inequality

    int h^2 phi^2 dmu <= E(h) + b_bar int_C h^2 dmu,   b_bar = b / min_C W,

applied to h = psi^n / phi gives a recursion on beta_n = int psi^{2n} dmu,
hence beta_n <= c a^n n! and int exp(a' psi^2) dmu < inf for a' < 1/a.
Everything here works on ln(beta_n) so that high moments do not overflow.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln, logsumexp

from .generator import DiscreteGenerator
from .lyapunov import DriftCertificate
from .scenario import Scenario, simpson_weights

A_MARGIN = 1.01          # a is taken 1% above the strict lower bound
RECURSION_RTOL = 1e-9    # quadrature tolerance for the recursion inequalities
CRUC_RTOL = 1e-8


class RecursionViolation(AssertionError):
    """A moment inequality failed; with valid constants this is a bug."""


class CrucViolation(AssertionError):
    """The weighted inequality failed for a valid certificate."""


# ---------------------------------------------------------------------------
# psi^2 with a cutoff on K = [-r, r]


def _num_deriv(f, x):
    x = np.asarray(x, dtype=float)
    eps = 1e-5 * (1.0 + np.abs(x))
    with np.errstate(divide="ignore", invalid="ignore"):
        return (np.asarray(f(x + eps), dtype=float) - np.asarray(f(x - eps), dtype=float)) / (2 * eps)


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3 - 2 * u), 6 * u * (1 - u)


@dataclass(frozen=True, eq=False)
class CutoffPsi2:
    """psi^2 set to 0 on |x| <= r, joined to the original by a C^1 ramp of
    width ``width``. r = 0 leaves psi^2 unchanged."""

    psi2: Callable
    r: float = 0.0
    width: float = 0.0
    dpsi2: Callable | None = None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        base = np.asarray(self.psi2(x), dtype=float) * np.ones_like(x)
        if self.r <= 0:
            return base
        s, _ = _smoothstep((np.abs(x) - self.r) / self.width)
        return np.where(np.abs(x) <= self.r, 0.0, base * s)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        d = (self.dpsi2(x) if self.dpsi2 is not None else _num_deriv(self.psi2, x)) * np.ones_like(x)
        if self.r <= 0:
            return d
        base = np.asarray(self.psi2(x), dtype=float) * np.ones_like(x)
        s, ds = _smoothstep((np.abs(x) - self.r) / self.width)
        out = d * s + base * ds * np.sign(x) / self.width
        return np.where(np.abs(x) <= self.r, 0.0, out)


def cutoff_psi2(psi2, r: float, width: float, dpsi2=None) -> CutoffPsi2:
    if r < 0 or (r > 0 and not width > 0):
        raise ValueError("need r >= 0 and a positive ramp width when r > 0")
    return CutoffPsi2(psi2, float(r), float(width), dpsi2)


# ---------------------------------------------------------------------------
# the four constants


@dataclass
class ConditionConstants:
    alpha: float
    beta: float
    gamma: float
    delta: float
    b_bar: float
    a: float                  # A_MARGIN times the strict lower bound
    a_formula: float          # the lower bound itself
    a_prime_max: float        # 1 / a
    K_radius: float
    C: tuple
    valid: bool
    psi2: CutoffPsi2 = field(repr=False)
    message: str = ""
    violating_region: tuple | None = None

    def bracket(self, n):
        """The n-dependent factor B(n) with beta_n <= B(n) beta_{n-1}."""
        n = np.asarray(n, dtype=float)
        q = 1.0 - self.delta
        P = (2 * (n + 1) * self.beta + self.gamma * self.b_bar) / q
        return 0.5 * (P + np.sqrt(P * P + 4 * self.alpha / q * (n + 1) ** 2))

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
                "delta": self.delta, "b_bar": self.b_bar, "a": self.a,
                "a_prime_max": self.a_prime_max, "K_radius": self.K_radius,
                "valid": bool(self.valid)}


def a_lower_bound(alpha: float, beta: float, delta: float) -> float:
    q = 1.0 - delta
    return 0.5 * (2 * beta / q + math.sqrt(4 * beta ** 2 / q ** 2 + 4 * alpha / q))


def _pointwise(x, phi2, dphi2, psi2: CutoffPsi2):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        p2 = np.asarray(phi2(x), dtype=float) * np.ones_like(x)
        dp2 = (np.asarray(dphi2(x), dtype=float) if dphi2 is not None else _num_deriv(phi2, x)) * np.ones_like(x)
        s2 = psi2(x)
        ds2 = psi2.deriv(x)
        # in terms of psi^2 and phi^2: psi psi' = (psi^2)'/2, phi' = (phi^2)'/(2 phi)
        alpha = ds2 * ds2 / (4 * p2)
        beta = np.abs(ds2 * dp2) / (4 * p2 * p2)
        delta = dp2 * dp2 / (4 * p2 ** 3)
        gamma = np.where(s2 == 0, 0.0, s2 / p2)   # psi = 0 on K
    return alpha, beta, delta, gamma, p2


def default_k_schedule(radius: float) -> np.ndarray:
    r = 0.25 * 2.0 ** np.arange(0, 40)
    return np.concatenate([[0.0], r[r < 0.5 * radius]])


def condition_constants(scenario: Scenario, phi2, psi2, C, *, b_bar: float = 0.0,
                        K: float | None = None, k_schedule=None, ramp: float | None = None,
                        dphi2=None, dpsi2=None, x=None) -> ConditionConstants:
    """Suprema of the four ratios outside K = [-r, r] (gamma over C).

    psi^2 is zeroed on K with a C^1 ramp (default one grid cell wide) just
    outside K. When K is not given, r is the first entry of the schedule for
    which delta < 1. Suprema run over every node outside K, ramp included:
    the recursion needs the bounds wherever psi is nonzero, so a steep ramp
    shows up as a large alpha rather than being skipped.
    """
    x = scenario.nodes if x is None else np.asarray(x, dtype=float)
    hx = float(x[1] - x[0])
    ramp = hx if ramp is None else float(ramp)
    lo, hi = map(float, C)
    radii = [float(K)] if K is not None else list(default_k_schedule(scenario.radius))
    last = None
    for r in radii:
        ps = cutoff_psi2(psi2, r, ramp, dpsi2) if r > 0 else CutoffPsi2(psi2, 0.0, 0.0, dpsi2)
        al, be, de, ga, p2 = _pointwise(x, phi2, dphi2, ps)
        out = np.abs(x) > r if r > 0 else np.ones(x.shape, bool)
        if not out.any():
            break
        inC = (x > lo) & (x < hi)
        vals = [al[out], be[out], de[out]]
        bad = ~np.all(np.isfinite(np.concatenate(vals))) or np.any(p2[out] <= 0)
        dsup = float(np.max(de[out])) if not bad else math.inf
        last = (r, ps, al, be, de, ga, out, inC, dsup, bad)
        if not bad and dsup < 1.0:
            break
    if last is None:
        raise ValueError("no grid nodes outside K")
    r, ps, al, be, de, ga, out, inC, dsup, bad = last
    alpha = float(np.max(al[out])) if not bad else math.inf
    beta = float(np.max(be[out])) if not bad else math.inf
    gvals = ga[inC]
    gamma = float(np.max(gvals)) if gvals.size else 0.0
    valid = (not bad) and dsup < 1.0 and math.isfinite(gamma)
    region = None
    msg = ""
    if valid:
        af = a_lower_bound(alpha, beta, dsup)
        if af == 0.0:
            # psi^2 constant outside K: any a > 0 works, keep a tiny one
            af = 1e-300
        a = A_MARGIN * af
    else:
        af = a = math.inf
        if bad:
            msg = "phi^2 must be positive and the ratios finite outside K"
        elif not dsup < 1.0:
            viol = out & ~(de < 1.0)
            region = (float(x[viol].min()), float(x[viol].max()))
            msg = (f"1/phi not a contraction: delta = {dsup:.4g} >= 1 on "
                   f"[{region[0]:.4g}, {region[1]:.4g}]")
        else:
            msg = "psi^2 / phi^2 unbounded on C"
    return ConditionConstants(alpha, beta, gamma, dsup, float(b_bar), a, af,
                              (1.0 / a) if valid else 0.0, r, (lo, hi), valid, ps, msg, region)


def constants_from_certificate(scenario: Scenario, cert: DriftCertificate, phi2, psi2,
                               **kw) -> ConditionConstants:
    """condition_constants with C and b_bar taken from a drift certificate."""
    if not cert.valid:
        raise ValueError("certificate is not valid")
    if cert.U is None:
        raise ValueError("certificate has no exceptional set C")
    return condition_constants(scenario, phi2, psi2, tuple(cert.U), b_bar=cert.b_bar, **kw)


# ---------------------------------------------------------------------------
# moments


@dataclass
class MomentSequence:
    log_values: np.ndarray          # ln beta_n, n = 0..n_max
    n_max: int
    log_convex: bool
    reduced_from: int | None = None

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)

    @property
    def ratios(self) -> np.ndarray:
        """beta_n / (n beta_{n-1}) for n = 1..n_max."""
        n = np.arange(1, self.n_max + 1)
        with np.errstate(invalid="ignore"):
            return np.exp(self.log_values[1:] - self.log_values[:-1] - np.log(n))


def _log_weights(scenario):
    x = scenario.nodes
    return np.log(simpson_weights(x.size, x[1] - x[0])) + scenario.log_density(x)


def moment_sequence(scenario: Scenario, psi2, n_max: int = 30,
                    tail_rtol: float | None = None, edge_frac: float = 0.01) -> MomentSequence:
    """ln beta_n by Simpson quadrature in log space on the scenario nodes.

    The outermost ``edge_frac`` of the nodes must carry less than
    ``tail_rtol`` (default: the scenario tail tolerance) of each integral;
    n_max is lowered, with a warning, to the last n that passes.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    tol = scenario.tail_tol if tail_rtol is None else tail_rtol
    x = scenario.nodes
    lw = _log_weights(scenario)
    s2 = np.asarray(psi2(x), dtype=float) * np.ones_like(x)
    if np.any(s2 < 0) or not np.all(np.isfinite(s2)):
        raise ValueError("psi^2 must be finite and >= 0 on the domain")
    with np.errstate(divide="ignore"):
        ls = np.log(s2)
    n = np.arange(n_max + 1)
    with np.errstate(invalid="ignore"):
        terms = lw[None, :] + np.where(n[:, None] == 0, 0.0, n[:, None] * ls[None, :])
    logb = logsumexp(terms, axis=1)
    k = max(2, int(edge_frac * x.size / 2))
    edge = np.concatenate([terms[:, :k], terms[:, -k:]], axis=1)
    with np.errstate(invalid="ignore"):
        rel = logsumexp(edge, axis=1) - logb
    ok = ~(rel > math.log(tol))       # -inf - -inf (psi = 0) counts as resolved
    reduced = None
    if not ok.all():
        first_bad = int(np.argmin(ok))
        if first_bad <= 1:
            raise ValueError("even the lowest moments are not resolved at this truncation; "
                             "enlarge the domain radius")
        reduced = n_max
        n_max = first_bad - 1
        warnings.warn(f"psi^{2 * first_bad} tail not resolved at radius {scenario.radius:g}: "
                      f"n_max reduced from {reduced} to {n_max}", stacklevel=2)
        logb = logb[: n_max + 1]
    fin = np.isfinite(logb)
    convex = True
    if n_max >= 2:
        mid = np.arange(1, n_max)
        both = fin[mid - 1] & fin[mid] & fin[mid + 1]
        lhs = 2 * logb[mid][both]
        rhs = (logb[mid - 1] + logb[mid + 1])[both]
        convex = bool(np.all(lhs <= rhs + 1e-10 * np.maximum(1.0, np.abs(rhs))))
    return MomentSequence(logb, n_max, convex, reduced)


# ---------------------------------------------------------------------------
# recursion


@dataclass
class RecursionReport:
    max_n: int
    worst_slack: float          # min relative slack over all checked inequalities
    two_term_slack: np.ndarray = field(repr=False)
    bracket_slack: np.ndarray = field(repr=False)
    n0: int                     # B(n) <= a n for all n >= n0
    a_observed: float           # max_n beta_n / (n beta_{n-1}) over the checked range
    a: float
    c: float                    # fitted: beta_n <= c a^n n!
    factorial_bound_ok: bool
    vacuous: bool = False

    def to_dict(self) -> dict:
        return {"max_n": self.max_n, "worst_slack": self.worst_slack, "n0": self.n0,
                "a_observed": self.a_observed, "a": self.a, "c": self.c}


def _rel_slack(log_lhs, log_rhs):
    """(rhs - lhs) / rhs from logs; 1 when lhs = 0."""
    with np.errstate(invalid="ignore", over="ignore"):
        out = -np.expm1(log_lhs - log_rhs)
    return np.where(np.isneginf(log_lhs), 1.0, out)


def first_collapsed_n(constants: ConditionConstants, n_limit: int = 10 ** 6) -> int:
    """Smallest n0 with B(n) <= a n for every n >= n0 (B(n)/n decreases to a_formula < a)."""
    n = np.arange(1, n_limit + 1, dtype=float)
    ok = constants.bracket(n) <= constants.a * n
    if not ok[-1]:
        raise ValueError("collapsed inequality not reached; a too close to its lower bound")
    bad = np.flatnonzero(~ok)
    return int(bad[-1] + 2) if bad.size else 1


def recursion_check(moments: MomentSequence, constants: ConditionConstants,
                    rtol: float = RECURSION_RTOL) -> RecursionReport:
    """Check the two-term recursion (n >= 2), beta_n <= B(n) beta_{n-1} (n >= 1),
    beta_n <= a n beta_{n-1} for n >= n0 and beta_n <= c a^n n!.

    Raises RecursionViolation naming the first failing n.
    """
    if not constants.valid:
        raise ValueError(f"constants not valid: {constants.message}")
    lb = moments.log_values
    N = moments.n_max
    a = constants.a
    if np.all(np.isneginf(lb[1:])):
        z = np.ones(0)
        return RecursionReport(N, 1.0, z, z, 1, 0.0, a, 1.0, True, vacuous=True)
    q = 1.0 - constants.delta
    n2 = np.arange(2, N + 1, dtype=float)
    with np.errstate(divide="ignore"):
        t1 = np.log(constants.alpha / q) + 2 * np.log(n2) + lb[:-2] if constants.alpha > 0 else np.full(n2.size, -np.inf)
        coef = (2 * n2 * constants.beta + constants.gamma * constants.b_bar) / q
        t2 = np.log(coef) + lb[1:-1]
    rhs2 = np.logaddexp(t1, t2)
    s2 = _rel_slack(lb[2:], rhs2)
    n1 = np.arange(1, N + 1, dtype=float)
    with np.errstate(divide="ignore"):
        rhs1 = np.log(constants.bracket(n1)) + lb[:-1]
    s1 = _rel_slack(lb[1:], rhs1)
    for name, s, start in (("two-term recursion", s2, 2), ("bracket bound", s1, 1)):
        if s.size and np.min(s) < -rtol:
            k = int(np.argmin(s))
            raise RecursionViolation(f"{name} violated at n = {k + start} (relative slack {s[k]:.3g})")
    n0 = first_collapsed_n(constants)
    with np.errstate(invalid="ignore"):
        obs = np.exp(lb[1:] - lb[:-1] - np.log(n1))
    obs = obs[np.isfinite(obs)]
    a_obs = float(np.max(obs)) if obs.size else 0.0
    if n0 <= N:
        coll = _rel_slack(lb[n0:], np.log(a * np.arange(n0, N + 1)) + lb[n0 - 1:-1])
        if np.min(coll) < -rtol:
            k = int(np.argmin(coll))
            raise RecursionViolation(f"beta_n <= a n beta_(n-1) violated at n = {k + n0}")
    # c from n <= min(n0, N); the bound beyond n0 follows by induction and is checked
    nn = np.arange(N + 1)
    lf = lb - nn * math.log(a) - gammaln(nn + 1)
    m = min(n0, N)
    log_c = float(np.max(lf[: m + 1]))
    ok = bool(np.all(lf <= log_c + rtol))
    worst = float(min(np.min(s2) if s2.size else 1.0, np.min(s1)))
    return RecursionReport(N, worst, s2, s1, n0, a_obs, a, math.exp(log_c), ok)


# ---------------------------------------------------------------------------
# exponential moment


@dataclass
class ExpMomentReport:
    a_prime: float
    direct: float
    series: float
    gap: float
    tail_bound: float           # last series term / (1 - a' a)
    bound: float | None         # c / (1 - a' a)
    consistent: bool
    within_bound: bool | None
    n_terms: int

    def to_dict(self) -> dict:
        return {"a_prime": self.a_prime, "direct": self.direct, "series": self.series,
                "gap": self.gap, "tail_bound": self.tail_bound, "bound": self.bound}


def exponential_moment(scenario: Scenario, psi2, a_prime: float, *,
                       moments: MomentSequence | None = None,
                       constants: ConditionConstants | None = None,
                       report: RecursionReport | None = None, quad_rtol: float = 1e-10,
                       edge_frac: float = 0.01) -> ExpMomentReport:
    """int exp(a' psi^2) dmu, directly and as sum_n a'^n beta_n / n!."""
    if a_prime < 0:
        raise ValueError("a' must be >= 0")
    if constants is not None and constants.valid and a_prime >= constants.a_prime_max:
        raise ValueError(f"a' = {a_prime:g} >= 1/a = {constants.a_prime_max:g}")
    x = scenario.nodes
    lw = _log_weights(scenario)
    s2 = np.asarray(psi2(x), dtype=float) * np.ones_like(x)
    terms = lw + a_prime * s2
    ld = float(logsumexp(terms))
    k = max(2, int(edge_frac * x.size / 2))
    edge = float(logsumexp(np.concatenate([terms[:k], terms[-k:]]))) - ld
    if edge > math.log(max(quad_rtol, scenario.tail_tol)):
        raise ValueError(f"direct quadrature of exp({a_prime:g} psi^2) not resolved at radius "
                         f"{scenario.radius:g} (edge share {math.exp(edge):.3g}): "
                         "inconsistent with a' < 1/a or the domain is too small")
    direct = math.exp(ld)
    if moments is None:
        moments = moment_sequence(scenario, psi2)
    n = np.arange(moments.n_max + 1)
    with np.errstate(divide="ignore"):
        la = math.log(a_prime) if a_prime > 0 else -math.inf
        lt = n * la if a_prime > 0 else np.where(n == 0, 0.0, -np.inf)
        lt = lt + moments.log_values - gammaln(n + 1)
    series = float(np.exp(logsumexp(lt)))
    aa = a_prime * constants.a if constants is not None and constants.valid else None
    last = float(np.exp(lt[-1]))
    tail = last / (1 - aa) if aa is not None else last
    gap = abs(direct - series)
    consistent = gap <= tail + 10 * quad_rtol * direct
    bound = within = None
    if report is not None and aa is not None:
        bound = report.c / (1 - aa)
        within = direct <= bound * (1 + quad_rtol)
    return ExpMomentReport(float(a_prime), direct, series, gap, tail, bound, bool(consistent),
                           within, int(moments.n_max + 1))


# ---------------------------------------------------------------------------
# the weighted inequality behind the recursion


@dataclass
class CrucReport:
    n_functions: int
    worst_slack: float                  # min relative slack, must be >= -CRUC_RTOL
    worst_function: str
    constant_case: dict
    poincare_constant: float            # 1 + b_bar e^{osc V} |C|^2 / pi^2
    C_P_interval: float
    holley_stroock_slack: float         # advisory: min relative slack on mean-zero-on-C tests
    slacks: dict = field(repr=False, default_factory=dict)

    def to_dict(self) -> dict:
        return {"n_functions": self.n_functions, "worst_slack": self.worst_slack,
                "worst_function": self.worst_function, "poincare_constant": self.poincare_constant,
                "C_P_interval": self.C_P_interval, "holley_stroock_slack": self.holley_stroock_slack}


def interval_poincare_constant(C) -> float:
    """Poincare constant of the uniform measure on an interval (Neumann gap)."""
    lo, hi = map(float, C)
    return (hi - lo) ** 2 / math.pi ** 2


def _test_functions(gen: DiscreteGenerator, C, n_random: int, seed: int):
    from numpy.polynomial.hermite_e import hermeval

    x = gen.x
    mu = gen.mean(x)
    sd = math.sqrt(max(gen.variance(x), 1e-300))
    z = (x - mu) / sd
    funcs = {}
    for k in range(8):
        c = np.zeros(k + 1)
        c[k] = 1.0
        funcs[f"hermite{k}"] = hermeval(z, c)
    lo, hi = C
    width = 0.5 * (hi - lo)
    for side, start in (("right", hi), ("left", lo - 2 * width)):
        u = (x - start - 0.25 * width) / (1.5 * width)
        bump = np.where((u > 0) & (u < 1), np.sin(np.pi * np.clip(u, 0, 1)) ** 2, 0.0)
        if np.any(bump > 0):
            funcs[f"bump-{side}"] = bump
    rng = np.random.default_rng(seed)
    L = gen.scenario.x_hi - gen.scenario.x_lo
    for j in range(n_random):
        if j % 2 == 0:
            f = np.cumsum(rng.standard_normal(x.size)) * math.sqrt(gen.h)
        else:
            k = np.arange(1, 13)
            amp = rng.standard_normal(k.size) / k
            ph = rng.uniform(0, 2 * np.pi, k.size)
            f = np.sin(np.pi * k[None, :] * (x[:, None] - gen.scenario.x_lo) / L + ph[None, :]) @ amp
        funcs[f"random{j}"] = f
    return funcs


def phi_lyap_to_poincare_check(scenario: Scenario, gen: DiscreteGenerator, cert: DriftCertificate,
                               *, n_random: int = 100, seed: int = 0,
                               rtol: float = CRUC_RTOL) -> CrucReport:
    """Check int h^2 phi^2 dmu <= E(h) + b_bar int_C h^2 dmu on the grid.

    phi^2 is the certificate's rate (lambda applied), C its exceptional set
    (U and collar). Test functions are Hermite modes of the standardised
    coordinate, bumps outside C and ``n_random`` random functions, each also
    shifted to have zero mean on C. Raises CrucViolation below -rtol.
    """
    if not cert.valid:
        raise ValueError("certificate is not valid")
    if cert.x is None or cert.x.size != gen.n:
        raise ValueError("certificate was computed on a different grid")
    m = gen.m
    p2 = cert.phi2
    inC = cert.exceptional if cert.exceptional is not None else np.zeros(gen.n, bool)
    bb = cert.b_bar
    if inC.any():
        C = (float(gen.x[inC].min()), float(gen.x[inC].max()))
    else:
        C = (0.0, 0.0)
    funcs = _test_functions(gen, C if inC.any() else (-1.0, 1.0), n_random, seed)
    if inC.any():
        mC = float(np.sum(m[inC]))
        for name in list(funcs):
            f = funcs[name]
            funcs[name + ":meanzero-C"] = f - float(np.sum(m[inC] * f[inC])) / mC
    osc = float(np.ptp(scenario.potential.V(gen.x[inC]))) if inC.any() else 0.0
    cp = interval_poincare_constant(C)
    K_hs = 1.0 + bb * math.exp(osc) * cp
    slacks = {}
    worst, worst_name = math.inf, ""
    hs = math.inf
    for name, f in funcs.items():
        if not np.max(np.abs(f)) > 1e-12:
            continue      # e.g. a constant with its mean on C removed
        f2 = f * f
        lhs = float(np.sum(m * f2 * p2))
        E = gen.dirichlet_form(f)
        rhs = E + bb * float(np.sum(m[inC] * f2[inC]))
        scale = max(abs(lhs), abs(rhs), 1e-300)
        s = (rhs - lhs) / scale
        slacks[name] = s
        if s < worst:
            worst, worst_name = s, name
        if name.endswith(":meanzero-C") and E > 0:
            hs = min(hs, (K_hs * E - lhs) / max(K_hs * E, abs(lhs)))
    const = {"lhs": float(np.sum(m * p2)), "rhs": bb * float(np.sum(m[inC]))}
    if worst < -rtol:
        raise CrucViolation(f"weighted inequality violated for {worst_name} "
                            f"(relative slack {worst:.3g})")
    return CrucReport(len(slacks), float(worst), worst_name, const, K_hs, cp, float(hs), slacks)
