"""Convergence to equilibrium and coming-down-from-infinity diagnostics.

Decay curves (variance, entropy, total variation) come from the grid
semigroup. The super-Lyapunov ladder is evaluated in closed form along the
radial direction in log coordinates, so radii far beyond the computational
domain (e.g. exp(k^4)) are representable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .generator import DiscreteGenerator, Evolver, build_generator
from .lyapunov import ExpPower
from .scenario import Scenario


# ---------------------------------------------------------------------------
# decay curves


@dataclass
class DecayCurve:
    metric: str
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    fitted_rate: float | None
    window: tuple | None
    residual: float | None
    clipped: int = 0
    clipped_mass: float = 0.0
    warnings: list = field(default_factory=list)

    def summary(self, scenario_tag: str = "") -> dict:
        return {"scenario": scenario_tag, "metric": self.metric,
                "fitted_rate": self.fitted_rate,
                "window": list(self.window) if self.window else None,
                "residual": self.residual}


def fit_rate(times, values, lo: float = 1e-8, hi: float = 1e-2):
    """Least-squares exponential rate over the window where the metric lies
    in [lo, hi] times its initial value. Returns (rate, window, residual, notes)."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    notes = []
    v0 = values[0]
    if not v0 > 0:
        return None, None, None, ["zero initial value: no fit"]
    rel = values / v0
    sel = (rel >= lo) & (rel <= hi) & (values > 0)
    if np.count_nonzero(sel) < 3:
        sel = (rel <= 0.1) & (values > 1e-300) & (rel >= 1e-13)
        notes.append("fit window shortened: metric left [1e-8, 1e-2] too early or too late")
        if np.count_nonzero(sel) < 3:
            return None, None, None, notes + ["too few points to fit"]
    t, y = times[sel], np.log(values[sel])
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(-coef[0]), (float(t[0]), float(t[-1])), resid, notes


def variance_decay(gen: DiscreteGenerator, f0, t_grid, gap: float | None = None) -> DecayCurve:
    f0 = np.asarray(f0(gen.x) if callable(f0) else f0, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    if gen.variance(f0) <= 1e-300:
        return DecayCurve("variance", t_grid, np.zeros_like(t_grid), None, None, None,
                          warnings=["constant initial function: zero curve"])
    states = Evolver(gen, "cn").evolve(f0, t_grid)
    vals = np.array([gen.variance(f) for f in states])
    rate, win, res, notes = fit_rate(t_grid, vals)
    curve = DecayCurve("variance", t_grid, vals, rate, win, res, warnings=notes)
    if gap is not None and rate is not None and rate < 2 * gap * (1 - 0.05):
        curve.warnings.append(f"fitted rate {rate:.4g} below 2*gap = {2 * gap:.4g}")
    return curve


def _entropy(gen, g):
    """Ent_mu(g) for a probability density g (mu(g) = 1), computed as
    sum m ((1 + d) log1p(d) - d) with d = g - 1 to avoid cancellation."""
    d = g - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(g > 0, (1.0 + d) * np.log1p(d) - d, 1.0)
    return float(np.dot(gen.m, terms))


def _clip_density(gen, g, counter):
    neg = g < 1e-30
    if np.any(neg):
        counter["n"] += int(np.count_nonzero(neg & (g < 0)))
        counter["mass"] = max(counter["mass"], float(np.dot(gen.m[neg], np.abs(np.minimum(g[neg], 0)))))
        g = np.where(neg, 1e-30, g)
    return g


def entropy_decay(gen: DiscreteGenerator, g0, t_grid, scheme: str = "cn") -> DecayCurve:
    """Ent_mu(P_t g0) for g0 >= 0, normalised to mu(g0) = 1."""
    g0 = np.asarray(g0(gen.x) if callable(g0) else g0, dtype=float)
    if np.any(g0 < 0):
        raise ValueError("g0 must be >= 0")
    g0 = g0 / gen.mean(g0)
    t_grid = np.asarray(t_grid, dtype=float)
    states = Evolver(gen, scheme).evolve(g0, t_grid)
    counter = {"n": 0, "mass": 0.0}
    vals = []
    for g in states:
        g = _clip_density(gen, g, counter)
        vals.append(max(_entropy(gen, g), 0.0))
    if counter["mass"] > 1e-3:
        raise ArithmeticError(f"negative density mass {counter['mass']:.3g} exceeds 0.1%")
    vals = np.array(vals)
    if vals[0] <= 1e-300:
        return DecayCurve("entropy", t_grid, vals, None, None, None, counter["n"], counter["mass"],
                          ["zero initial entropy: no fit"])
    rate, win, res, notes = fit_rate(t_grid, vals)
    return DecayCurve("entropy", t_grid, vals, rate, win, res, counter["n"], counter["mass"], notes)


def point_mass(gen: DiscreteGenerator, x0) -> tuple[int, np.ndarray]:
    """Density (w.r.t. mu) of the normalised indicator of the cell of x0."""
    i = int(np.argmin(np.abs(gen.x - x0)))
    f = np.zeros(gen.n)
    f[i] = math.exp(-gen.log_m[i])
    return i, f


def _tv(gen, f):
    return 0.5 * float(np.dot(gen.m, np.abs(f - 1.0)))


def tv_decay(gen: DiscreteGenerator, x0, t_grid, scheme: str = "be") -> DecayCurve:
    """||P_t(x0, .) - mu||_TV from a discrete point mass at the node nearest x0."""
    _, f0 = point_mass(gen, x0)
    t_grid = np.asarray(t_grid, dtype=float)
    states = Evolver(gen, scheme).evolve(f0, t_grid)
    counter = {"n": 0, "mass": 0.0}
    vals = np.array([_tv(gen, _clip_density(gen, f, counter)) for f in states])
    if counter["mass"] > 1e-3:
        raise ArithmeticError(f"negative density mass {counter['mass']:.3g} exceeds 0.1%")
    rate, win, res, notes = fit_rate(t_grid, vals)
    return DecayCurve("tv", t_grid, vals, rate, win, res, counter["n"], counter["mass"], notes)


@dataclass
class TVProfile:
    t: float
    x: np.ndarray = field(repr=False)
    tv: np.ndarray = field(repr=False)
    sup: float
    argmax: float


def _sweep_nodes(gen, n_sweep):
    """Node indices on the right half, ending at the truncation edge."""
    pos = np.flatnonzero(gen.x >= 0)
    pick = np.unique(np.linspace(0, pos.size - 1, n_sweep).round().astype(int))
    return pos[pick]


def uniform_tv_sup(gen: DiscreteGenerator, t: float, n_sweep: int = 33,
                   symmetric: bool = True) -> TVProfile:
    """max over start nodes of ||P_t(x, .) - mu||_TV, with the x-profile.

    Start nodes are a sweep of ``n_sweep`` nodes on [0, x_hi] (plus the
    mirror side for non-symmetric potentials)."""
    if not t > 0:
        raise ValueError("t must be > 0")
    idx = _sweep_nodes(gen, n_sweep)
    if not (symmetric and gen.scenario.potential.symmetric):
        neg = np.flatnonzero(gen.x < 0)
        pick = np.unique(np.linspace(0, neg.size - 1, n_sweep).round().astype(int))
        idx = np.concatenate([neg[pick], idx])
    F = np.zeros((gen.n, idx.size), order="F")
    F[idx, np.arange(idx.size)] = np.exp(-gen.log_m[idx])
    P = Evolver(gen, "be").advance(F, t, fresh=True)
    tv = 0.5 * (gen.m @ np.abs(P - 1.0))
    k = int(np.argmax(tv))
    return TVProfile(float(t), gen.x[idx], tv, float(tv[k]), float(gen.x[idx][k]))


def uniform_ergodicity_trend(scenario: Scenario, t: float, factors=(1.0, 1.5, 2.0),
                             N: int = 2048, rtol: float = 0.1) -> dict:
    """sup-TV profile across a sweep of truncation radii.

    The verdict is "uniform" when the supremum stops growing (relative
    increase from the first to the last radius <= rtol), "non-uniform"
    otherwise."""
    sups = []
    for f in factors:
        sc = scenario.with_radius(f * scenario.radius)
        sups.append(uniform_tv_sup(build_generator(sc, int(round(N * f))), t).sup)
    sups = np.array(sups)
    growth = float(sups[-1] / sups[0] - 1.0)
    return {"factors": list(factors), "sup_tv": sups.tolist(), "relative_growth": growth,
            "verdict": "uniform" if growth <= rtol else "non-uniform"}


# ---------------------------------------------------------------------------
# ultraboundedness


@dataclass
class UltraProfile:
    t: float
    x: np.ndarray = field(repr=False)
    sup_density: np.ndarray = field(repr=False)
    sup: float


def ultraboundedness_probe(gen: DiscreteGenerator, t: float, x_sweep=None,
                           n_sweep: int = 17) -> UltraProfile:
    """sup_y p_t(x, y) (density w.r.t. mu) as x sweeps to the truncation edge."""
    if not t > 0:
        raise ValueError("t must be > 0")
    if x_sweep is None:
        idx = _sweep_nodes(gen, n_sweep)
    else:
        idx = np.unique([int(np.argmin(np.abs(gen.x - xv))) for xv in np.atleast_1d(x_sweep)])
    # evolve probability masses q = m * density; bounded entries, exact
    # division by m at the end
    F = np.zeros((gen.n, idx.size), order="F")
    F[idx, np.arange(idx.size)] = np.exp(-gen.log_m[idx])
    P = Evolver(gen, "be").advance(F, t, fresh=True)
    sup_d = np.max(P, axis=0)
    return UltraProfile(float(t), gen.x[idx], sup_d, float(np.max(sup_d)))


def ultraboundedness_trend(scenario: Scenario, t: float, factors=(1.0, 1.5, 2.0),
                           N: int = 2048, threshold: float = 2.0) -> dict:
    """Probe across truncation radii; "bounded" if the supremum grows by less
    than ``threshold`` times between the smallest and largest radius."""
    sups = []
    for f in factors:
        sc = scenario.with_radius(f * scenario.radius)
        sups.append(ultraboundedness_probe(build_generator(sc, int(round(N * f))), t).sup)
    sups = np.array(sups)
    ratio = float(sups[-1] / sups[0])
    return {"factors": list(factors), "sup_density": sups.tolist(), "growth_ratio": ratio,
            "verdict": "bounded" if ratio < threshold else "growing"}


def stepped_lyapunov_check(scenario: Scenario, gen: DiscreteGenerator, W, t: float, phi2, U):
    """Advisory: is P_t W again a Lyapunov function (certify_drift on P_t W)?"""
    from .lyapunov import certify_drift

    Wn = np.exp(W.log_W(gen.x)) if hasattr(W, "log_W") else np.asarray(W, dtype=float)
    PW = Evolver(gen, "cn").advance(Wn, t, fresh=False)
    return certify_drift(scenario, gen, PW, phi2, U, tag="P_t W")


# ---------------------------------------------------------------------------
# super-Lyapunov ladder


def radii_schedule(kind: str = "exp-power", k_start: int = 1, k_stop: int = 60,
                   power: float = 1.0, r0: float = 1.0, ratio: float = 2.0) -> np.ndarray:
    """ln R_k for k = k_start..k_stop.

    "exp-power": R_k = exp(k^power); "geometric": R_k = r0 * ratio^k."""
    k = np.arange(k_start, k_stop + 1, dtype=float)
    if kind == "exp-power":
        return k ** power
    if kind == "geometric":
        return math.log(r0) + k * math.log(ratio)
    raise ValueError(f"unknown schedule {kind!r}")


@dataclass
class LadderReport:
    log_radii: np.ndarray = field(repr=False)
    log_lambdas: np.ndarray = field(repr=False)
    log_b: np.ndarray = field(repr=False)
    log_lnw: np.ndarray = field(repr=False)      # ln(ln w_k)
    terms: np.ndarray = field(repr=False)         # ln w_k / lambda_k
    partial_sums: np.ndarray = field(repr=False)  # S_K
    deltas: tuple = ()
    log_products: dict = field(default_factory=dict)  # delta -> delta * S_K
    verdict: str = ""
    tail_slope: float | None = None
    tail_ratio: float | None = None
    envelope: str = "annulus"
    candidate: str = ""
    truncated: str | None = None

    @property
    def k(self) -> np.ndarray:
        return np.arange(self.terms.size)

    def cauchy_increment(self, K: int) -> float:
        """Largest consecutive increment S_{k+1} - S_k over k >= K."""
        if K + 1 >= self.partial_sums.size:
            return 0.0
        return float(np.max(np.diff(self.partial_sums[K:])))

    def tail_sum(self, K: int) -> float:
        """S_last - S_K within the ladder (inf once the partial sums overflow)."""
        a, b = self.partial_sums[-1], self.partial_sums[min(K, self.partial_sums.size - 1)]
        return math.inf if not np.isfinite(a) else float(a - b)

    def to_rows(self):
        for i in range(self.terms.size):
            yield {"k": i, "ln_R": self.log_radii[i], "ln_lambda": self.log_lambdas[i],
                   "ln_b": self.log_b[i], "ln_ln_w": self.log_lnw[i],
                   "term": self.terms[i], "S": self.partial_sums[i]}


def _classify(terms, k_index):
    """Trend verdict from the second half of the term sequence."""
    n = terms.size
    tail = slice(n // 2, n)
    t, k = terms[tail], k_index[tail]
    if not np.all(np.isfinite(t)) or np.any(t <= 0):
        return "divergent", None, None
    slope = float(np.polyfit(np.log(k), np.log(t), 1)[0])
    ratio = float(np.median(t[1:] / t[:-1]))
    conv = slope < -1.05 or ratio < 0.95
    return ("convergent" if conv else "divergent"), slope, ratio


def build_ladder(scenario: Scenario, log_radii, candidate: ExpPower | None = None, *,
                 envelope: str = "annulus", samples: int = 48, k0: int = 0,
                 k_index=None) -> LadderReport:
    """SLC ladder for a closed-form candidate W (default exp(x^2/2)).

    lambda_k is the infimum of -LW/W over |x| >= R_k (up to the last radius),
    w_k the supremum of W over the annulus R_k <= |x| <= R_{k+1}
    (``envelope="annulus"``) or its value at the inner radius
    (``envelope="inner"``). Terms ln w_k / lambda_k are formed in log space.
    """
    W = candidate or ExpPower(0.5, 2.0)
    pot = scenario.potential
    lr = np.asarray(log_radii, dtype=float)
    if np.any(np.diff(lr) <= 0):
        raise ValueError("radii must be strictly increasing")
    if envelope not in ("annulus", "inner"):
        raise ValueError("envelope must be 'annulus' or 'inner'")
    K = lr.size - 1
    # sample ln|x| densely from the first to the last radius
    grid = np.concatenate([np.linspace(lr[i], lr[i + 1], samples, endpoint=False)
                           for i in range(K)] + [lr[-1:]])
    lneg = W.log_neg_ratio(pot, grid)
    log_lam = np.empty(K)
    truncated = None
    for i in range(K):
        seg = lneg[i * samples:]
        if np.any(~np.isfinite(seg)):
            truncated = f"no positive rate beyond R_{i}: ladder truncated"
            K = i
            break
        log_lam[i] = float(np.min(seg))
    log_lam = log_lam[:K]
    if K < 3:
        raise ValueError(truncated or "ladder too short")
    # ln ln W(R) = ln a + p ln R ; W radial increasing
    llw_at = lambda l: math.log(W.a) + W.p * l
    if envelope == "annulus":
        log_lnw = np.array([llw_at(lr[i + 1]) for i in range(K)])
    else:
        log_lnw = np.array([llw_at(lr[i]) for i in range(K)])
    log_terms = log_lnw - log_lam
    with np.errstate(over="ignore"):
        terms = np.exp(log_terms)
    S = np.cumsum(terms)
    # b_k = sup over B_k of W (LW/W + lambda_k) <= W(R_k) (lambda_k + sup LW/W)
    sup_pos = max(0.0, float(np.max(W.ratio(pot, np.linspace(0.0, 1.0, 201)))))
    lsp = math.log(sup_pos) if sup_pos > 0 else -np.inf
    with np.errstate(over="ignore"):
        log_b = np.logaddexp(log_lam, lsp) + np.exp(math.log(W.a) + W.p * lr[:K])
    lam0 = math.exp(log_lam[k0])
    deltas = (lam0 / 2.0, lam0 / 4.0)
    logp = {f"{d:.6g}": (d * S).tolist() for d in deltas}
    kk = np.arange(1, K + 1, dtype=float) if k_index is None else np.asarray(k_index, float)[:K]
    verdict, slope, ratio = _classify(terms, kk)
    return LadderReport(lr[:K], log_lam, log_b, log_lnw, terms, S, deltas, logp, verdict,
                        slope, ratio, envelope, W.tag, truncated)
