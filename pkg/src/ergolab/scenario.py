"""Potentials, invariant measures and the truncated computational domain.

A scenario fixes V, the normalised Gibbs measure mu = exp(-V)/Z dx and a
finite interval [x_lo, x_hi] carrying almost all of mu. Everything else in
the package consumes a :class:`Scenario`.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import PchipInterpolator
from scipy.special import logsumexp

FAMILIES = ("quadratic", "power", "logpower", "cauchy", "table")


class ScenarioError(ValueError):
    """Invalid potential parameters or an unusable truncation."""


# ---------------------------------------------------------------------------
# potentials


class Potential:
    """Base class: V, V' and V'' as vectorised callables.

    ``log_dV(lx)`` returns ln V'(e^lx) for large positive arguments and is
    used by the radial ladder, where x itself may not be representable.
    """

    family: str = ""
    symmetric: bool = True

    def V(self, x):
        raise NotImplementedError

    def dV(self, x):
        raise NotImplementedError

    def d2V(self, x):
        raise NotImplementedError

    def log_dV(self, lx):
        raise NotImplementedError(f"{self.family}: no log-scale derivative")

    @property
    def params(self) -> dict:
        return {}

    @property
    def tag(self) -> str:
        inner = ",".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))
        return f"{self.family}({inner})"

    def scaled(self, s: float) -> "Potential":
        """The potential s*V (used for flattening checks)."""
        return _Scaled(self, s)

    def __repr__(self) -> str:
        return f"<Potential {self.tag}>"


class Quadratic(Potential):
    """V = k x^2 / 2 (k = 1 is the Ornstein-Uhlenbeck case)."""

    family = "quadratic"

    def __init__(self, k: float = 1.0):
        if not k > 0:
            raise ScenarioError("quadratic: k must be > 0")
        self.k = float(k)

    @property
    def params(self):
        return {"k": self.k}

    def V(self, x):
        return 0.5 * self.k * np.asarray(x, dtype=float) ** 2

    def dV(self, x):
        return self.k * np.asarray(x, dtype=float)

    def d2V(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.k)

    def log_dV(self, lx):
        return math.log(self.k) + np.asarray(lx, dtype=float)


class Power(Potential):
    """V = scale * |x|^alpha with alpha >= 1."""

    family = "power"

    def __init__(self, alpha: float, scale: float = 1.0):
        if not alpha >= 1:
            raise ScenarioError(f"power: alpha must be >= 1, got {alpha}")
        if not scale > 0:
            raise ScenarioError("power: scale must be > 0")
        self.alpha = float(alpha)
        self.scale = float(scale)

    @property
    def params(self):
        return {"alpha": self.alpha, "scale": self.scale}

    def V(self, x):
        return self.scale * np.abs(np.asarray(x, dtype=float)) ** self.alpha

    def dV(self, x):
        x = np.asarray(x, dtype=float)
        return self.scale * self.alpha * np.sign(x) * np.abs(x) ** (self.alpha - 1)

    def d2V(self, x):
        x = np.asarray(x, dtype=float)
        a = self.alpha
        if a == 1.0:
            return np.zeros_like(x)
        with np.errstate(divide="ignore"):
            return self.scale * a * (a - 1) * np.abs(x) ** (a - 2)

    def log_dV(self, lx):
        return math.log(self.scale * self.alpha) + (self.alpha - 1) * np.asarray(lx, dtype=float)


class LogPower(Potential):
    """V = (1 + x^2) ln^beta(1 + x^2), beta > 0."""

    family = "logpower"

    def __init__(self, beta: float):
        if not beta > 0:
            raise ScenarioError(f"logpower: beta must be > 0, got {beta}")
        self.beta = float(beta)

    @property
    def params(self):
        return {"beta": self.beta}

    def V(self, x):
        u = 1.0 + np.asarray(x, dtype=float) ** 2
        return u * np.log(u) ** self.beta

    def dV(self, x):
        x = np.asarray(x, dtype=float)
        L = np.log1p(x * x)
        b = self.beta
        with np.errstate(divide="ignore", invalid="ignore"):
            out = 2.0 * x * L ** (b - 1) * (L + b)
        # for beta < 1 the factor L^(beta-1) blows up at 0 but x*L^(beta-1) -> 0
        return np.where(x == 0.0, 0.0, out)

    def d2V(self, x):
        x = np.asarray(x, dtype=float)
        b = self.beta
        L = np.log1p(x * x)
        u = 1.0 + x * x
        with np.errstate(divide="ignore", invalid="ignore"):
            g = L ** (b - 1) * (L + b)
            dg = (2 * x / u) * ((b - 1) * L ** (b - 2) * (L + b) + L ** (b - 1))
            out = 2.0 * g + 2.0 * x * dg
        if b >= 1:
            return np.where(x == 0.0, 2.0 * b if b == 1 else 0.0, out)
        return np.where(x == 0.0, np.inf, out)

    def log_dV(self, lx):
        lx = np.asarray(lx, dtype=float)
        lu = 2 * lx + np.log1p(np.exp(-2 * lx))
        Lu = np.log(lu) if np.ndim(lu) else math.log(lu)
        return math.log(2.0) + lx + (self.beta - 1) * Lu + np.log(lu + self.beta)


class Cauchy(Potential):
    """V = c ln(1 + x^2); normalisable only for c > 1/2, no spectral gap."""

    family = "cauchy"

    def __init__(self, c: float):
        if not c > 0:
            raise ScenarioError("cauchy: c must be > 0")
        self.c = float(c)

    @property
    def params(self):
        return {"c": self.c}

    def V(self, x):
        return self.c * np.log1p(np.asarray(x, dtype=float) ** 2)

    def dV(self, x):
        x = np.asarray(x, dtype=float)
        return 2 * self.c * x / (1 + x * x)

    def d2V(self, x):
        x = np.asarray(x, dtype=float)
        return 2 * self.c * (1 - x * x) / (1 + x * x) ** 2

    def log_dV(self, lx):
        lx = np.asarray(lx, dtype=float)
        return math.log(2 * self.c) - lx - np.log1p(np.exp(-2 * lx))


class Tabulated(Potential):
    """Monotone cubic (pchip) interpolation of sampled (x, V) pairs."""

    family = "table"
    symmetric = False

    def __init__(self, x, v, source: str = "<array>"):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if x.ndim != 1 or x.shape != v.shape or x.size < 4:
            raise ScenarioError("table: need at least 4 (x, V) pairs")
        if np.any(np.diff(x) <= 0):
            raise ScenarioError("table: x must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ScenarioError("table: V values must be finite")
        self.source = source
        self.x = x
        self._p = PchipInterpolator(x, v, extrapolate=False)
        self._d1 = self._p.derivative(1)
        self._d2 = self._p.derivative(2)

    @property
    def params(self):
        return {"n": float(self.x.size)}

    @property
    def tag(self):
        return f"table({self.source})"

    def _clip(self, x):
        return np.clip(np.asarray(x, dtype=float), self.x[0], self.x[-1])

    def V(self, x):
        return self._p(self._clip(x))

    def dV(self, x):
        return self._d1(self._clip(x))

    def d2V(self, x):
        return self._d2(self._clip(x))


class _Scaled(Potential):
    def __init__(self, base: Potential, s: float):
        self.base, self.s = base, float(s)
        self.family = base.family
        self.symmetric = base.symmetric

    @property
    def params(self):
        return {**self.base.params, "factor": self.s}

    def V(self, x):
        return self.s * self.base.V(x)

    def dV(self, x):
        return self.s * self.base.dV(x)

    def d2V(self, x):
        return self.s * self.base.d2V(x)

    def log_dV(self, lx):
        return math.log(self.s) + self.base.log_dV(lx)


def load_table(path) -> Tabulated:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if len(rec) < 2:
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except ValueError:
                continue  # header or comment line
    if not rows:
        raise ScenarioError(f"table: no numeric rows in {path}")
    arr = np.array(rows)
    return Tabulated(arr[:, 0], arr[:, 1], source=Path(path).name)


def make_potential(family: str, params: Mapping | None = None, base_dir=None) -> Potential:
    params = dict(params or {})
    try:
        if family == "quadratic":
            return Quadratic(**params)
        if family == "power":
            return Power(**params)
        if family == "logpower":
            return LogPower(**params)
        if family == "cauchy":
            return Cauchy(**params)
        if family == "table":
            p = Path(params.pop("path"))
            if params:
                raise TypeError(f"unexpected keys {sorted(params)}")
            if base_dir is not None and not p.is_absolute():
                p = Path(base_dir) / p
            return load_table(p)
    except (TypeError, KeyError) as exc:
        raise ScenarioError(f"{family}: bad parameters ({exc})") from None
    raise ScenarioError(f"unknown family {family!r}; expected one of {FAMILIES}")


# ---------------------------------------------------------------------------
# truncation and measure


@dataclass(frozen=True)
class TruncationPolicy:
    tail_tol: float = 1e-10
    max_radius: float = 400.0
    radius: float | None = None  # fixed half-width; overrides the tail search
    quad_nodes: int = 2**14 + 1


def simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights on n (odd) equispaced nodes."""
    if n < 3 or n % 2 == 0:
        raise ValueError("Simpson rule needs an odd number >= 3 of nodes")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def _log_integral(V: Callable, a: float, b: float, points=None) -> float:
    """ln of int_a^b exp(-V) with the integrand rescaled by its minimum."""
    if b <= a:
        return -np.inf
    xs = np.linspace(a, b, 2049) if np.isfinite(b) else a + np.expm1(np.linspace(0, 6, 2049))
    v0 = float(np.min(V(xs)))
    f = lambda x: math.exp(-(float(V(x)) - v0))
    pts = [p for p in (points or []) if a < p < b] or None
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if np.isfinite(b):
                val, _ = integrate.quad(f, a, b, points=pts, limit=500, epsabs=0, epsrel=1e-13)
            else:
                val, _ = integrate.quad(f, a, b, limit=500, epsabs=0, epsrel=1e-12)
        except integrate.IntegrationWarning:
            return np.inf
    if not np.isfinite(val) or val <= 0:
        return np.inf if not val > 0 else -np.inf
    return math.log(val) - v0


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable bundle: potential, normalisation and truncated domain."""

    potential: Potential
    log_Z: float
    x_lo: float
    x_hi: float
    tail_tol: float
    tail_mass: float
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    outside_hypotheses: bool = False
    policy: TruncationPolicy = field(default_factory=TruncationPolicy, repr=False)

    @property
    def Z(self) -> float:
        return math.exp(self.log_Z)

    @property
    def radius(self) -> float:
        return max(-self.x_lo, self.x_hi)

    @property
    def tag(self) -> str:
        return self.potential.tag

    def log_density(self, x):
        return -self.potential.V(x) - self.log_Z

    def density(self, x):
        return np.exp(self.log_density(x))

    def with_radius(self, radius: float) -> "Scenario":
        """Same potential on [-radius, radius] (tail target ignored)."""
        pol = TruncationPolicy(self.policy.tail_tol, max(self.policy.max_radius, radius),
                               float(radius), self.policy.quad_nodes)
        return build_scenario(self.potential, pol)

    def to_dict(self) -> dict:
        return {
            "potential": self.potential.tag,
            "Z": self.Z,
            "x_lo": self.x_lo,
            "x_hi": self.x_hi,
            "tail_tol": self.tail_tol,
            "tail_mass": self.tail_mass,
            "outside_hypotheses": self.outside_hypotheses,
        }


def _tail_log_mass(pot: Potential, R: float, log_Z: float) -> float:
    """ln mu(|x| > R) (both sides)."""
    right = _log_integral(pot.V, R, np.inf)
    if pot.symmetric:
        return math.log(2.0) + right - log_Z
    left = _log_integral(lambda x: pot.V(-x), R, np.inf)
    return float(np.logaddexp(left, right)) - log_Z


def build_scenario(potential, policy: TruncationPolicy | None = None) -> Scenario:
    """Normalise mu, choose the truncation radius and set up quadrature.

    ``potential`` is a :class:`Potential` or a mapping with ``family`` and
    ``params`` keys.
    """
    policy = policy or TruncationPolicy()
    if isinstance(potential, Mapping):
        potential = make_potential(potential["family"], potential.get("params"))
    pot = potential
    if not 0 < policy.tail_tol < 1:
        raise ScenarioError("tail_tol must lie in (0, 1)")

    if isinstance(pot, Tabulated):
        x_lo, x_hi = float(pot.x[0]), float(pot.x[-1])
        if policy.radius is not None:
            x_lo, x_hi = max(x_lo, -policy.radius), min(x_hi, policy.radius)
        log_Z = _log_integral(pot.V, x_lo, x_hi, points=list(pot.x))
        tail = 0.0
    else:
        if isinstance(pot, Cauchy) and 2 * pot.c <= 1:
            raise ScenarioError(
                f"non-integrable potential: c ln(1+x^2) needs 2c > 1 (c = {pot.c})")
        log_half = _log_integral(pot.V, 0.0, np.inf)
        if not np.isfinite(log_half):
            raise ScenarioError(f"non-integrable potential {pot.tag}: exp(-V) has infinite mass")
        log_Z = math.log(2.0) + log_half if pot.symmetric else float(
            np.logaddexp(log_half, _log_integral(lambda x: pot.V(-x), 0.0, np.inf)))
        log_tol = math.log(policy.tail_tol)
        if policy.radius is not None:
            R = float(policy.radius)
        else:
            g = lambda R: _tail_log_mass(pot, R, log_Z) - log_tol
            R = 1.0
            while g(R) > 0:
                R *= 2.0
                if R > policy.max_radius:
                    if g(policy.max_radius) > 0:
                        raise ScenarioError(
                            f"truncation target {policy.tail_tol:g} unreachable "
                            f"within max_radius {policy.max_radius:g} for {pot.tag}")
                    R = policy.max_radius
                    break
            if R > 1.0:
                R = optimize.brentq(g, R / 2, R, xtol=1e-10, rtol=1e-12)
            # a few percent of head room so the target holds strictly
            R = min(R * 1.02, max(policy.max_radius, R))
        if R > policy.max_radius:
            raise ScenarioError(f"radius {R:g} exceeds max_radius {policy.max_radius:g}")
        x_lo, x_hi = -R, R
        tail = math.exp(_tail_log_mass(pot, R, log_Z))

    n = policy.quad_nodes
    nodes = np.linspace(x_lo, x_hi, n)
    logw = np.log(simpson_weights(n, nodes[1] - nodes[0])) - pot.V(nodes) - log_Z
    weights = np.exp(logw)
    # calibrate the node rule to the adaptive mass of the domain, so that
    # sum(weights) = 1 - tail exactly (Simpson loses accuracy at kinks of V)
    weights *= (1.0 - tail) / weights.sum()
    return Scenario(pot, float(log_Z), float(x_lo), float(x_hi), float(policy.tail_tol),
                    float(tail), nodes, weights, isinstance(pot, Tabulated), policy)


def scenario_from_dict(spec: Mapping, base_dir=None) -> Scenario:
    """Build from the JSON form {"family", "params", "tail_tol", "max_radius", "radius"}."""
    allowed = {"family", "params", "tail_tol", "max_radius", "radius"}
    extra = set(spec) - allowed
    if extra:
        raise ScenarioError(f"unknown scenario keys: {sorted(extra)}")
    if "family" not in spec:
        raise ScenarioError("scenario needs a 'family'")
    pot = make_potential(spec["family"], spec.get("params"), base_dir=base_dir)
    d = TruncationPolicy()
    pol = TruncationPolicy(
        tail_tol=float(spec.get("tail_tol", d.tail_tol)),
        max_radius=float(spec.get("max_radius", d.max_radius)),
        radius=None if spec.get("radius") is None else float(spec["radius"]),
    )
    return build_scenario(pot, pol)


def load_scenario(path) -> Scenario:
    path = Path(path)
    with open(path) as fh:
        return scenario_from_dict(json.load(fh), base_dir=path.parent)


# ---------------------------------------------------------------------------
# integrals against mu


@dataclass(frozen=True)
class Moment:
    value: float
    error: float

    def __float__(self):
        return self.value


def _check_finite(vals, nodes, what="g"):
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(f"{what} is not finite at node {i} (x = {nodes[i]:.6g})")


def measure_moment(scenario: Scenario, g: Callable) -> Moment:
    """Integral of g against mu on the truncated domain, with a Richardson
    error estimate from the half-resolution Simpson rule."""
    x = scenario.nodes
    vals = np.asarray(g(x), dtype=float) * np.ones_like(x)
    _check_finite(vals, x)
    fine = float(np.sum(scenario.weights * vals))
    # coarse rule on every other node
    xc = x[::2]
    wc = simpson_weights(xc.size, xc[1] - xc[0]) * np.exp(scenario.log_density(xc))
    coarse = float(np.sum(wc * vals[::2]))
    return Moment(fine, abs(fine - coarse) / 15.0)


def log_moment(scenario: Scenario, log_g: np.ndarray) -> float:
    """ln of the integral of exp(log_g) against mu, on the quadrature nodes."""
    log_g = np.asarray(log_g, dtype=float)
    h = scenario.nodes[1] - scenario.nodes[0]
    lw = np.log(simpson_weights(scenario.nodes.size, h)) + scenario.log_density(scenario.nodes)
    return float(logsumexp(lw + log_g))


def measure_of_set(scenario: Scenario, interval) -> float:
    """mu(A) for an interval A = (a, b), clipped to the domain.

    An empty or degenerate interval gives 0 together with a warning.
    """
    a, b = (float(interval[0]), float(interval[1]))
    a, b = max(a, scenario.x_lo), min(b, scenario.x_hi)
    if not b > a:
        warnings.warn(f"empty interval ({interval[0]}, {interval[1]}): measure 0", stacklevel=2)
        return 0.0
    pot = scenario.potential
    pts = [0.0] if a < 0.0 < b else None
    if isinstance(pot, Tabulated):
        pts = [p for p in pot.x if a < p < b][:400] or None
    lv = _log_integral(pot.V, a, b, points=pts)
    return float(min(1.0, max(0.0, math.exp(lv - scenario.log_Z))))
