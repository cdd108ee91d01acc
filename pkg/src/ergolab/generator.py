"""Finite-volume realisation of L = f'' - V'f' on the truncated domain.

The stencil is written in divergence form with face weights
a_{i+1/2} = rho(x_{i+1/2}) and cell masses m_i = mu(cell_i):

    (Lf)_i = [a_{i+1/2}(f_{i+1} - f_i) - a_{i-1/2}(f_i - f_{i-1})] / (h m_i)

so that m_i L_ij = m_j L_ji holds exactly and the discrete Dirichlet form
is sum a (df)^2 / h. All weights are handled in log space; the symmetric
similarity transform S = M^{1/2} (-L) M^{-1/2} has entries of order 1/h^2
and is what the Sturm-count eigensolver sees.
"""

from __future__ import annotations

import math
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack, solve_banded
from scipy.special import logsumexp

from . import _kernels
from .scenario import Scenario

DEFAULT_N = 4096


class NotCoerciveError(ValueError):
    pass


def _log_cell_mass(V, left, right):
    """ln of int exp(-V) over [left, right] by Simpson (vectorised)."""
    mid = 0.5 * (left + right)
    lv = np.stack([-V(left), -V(mid), -V(right)])
    lw = np.log(np.array([1.0, 4.0, 1.0]))[:, None]
    return logsumexp(lv + lw, axis=0) + np.log((right - left) / 6.0)


@dataclass(frozen=True, eq=False)
class DiscreteGenerator:
    scenario: Scenario
    x: np.ndarray = field(repr=False)
    h: float
    log_m: np.ndarray = field(repr=False)    # cell masses, sum(m) = 1
    log_a: np.ndarray = field(repr=False)    # face weights, length N
    log_c: float = field(repr=False)         # ln of the discrete normaliser
    lower: np.ndarray = field(repr=False)    # L[i, i-1], lower[0] = 0
    upper: np.ndarray = field(repr=False)    # L[i, i+1], upper[N] = 0

    @property
    def N(self) -> int:
        return self.x.size - 1

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def m(self) -> np.ndarray:
        return np.exp(self.log_m)

    @property
    def a(self) -> np.ndarray:
        return np.exp(self.log_a)

    @property
    def diag(self) -> np.ndarray:
        return -(self.lower + self.upper)

    @property
    def s_diag(self) -> np.ndarray:
        return self.lower + self.upper

    @property
    def s_off(self) -> np.ndarray:
        lm = self.log_m
        return -np.exp(self.log_a - 0.5 * (lm[:-1] + lm[1:])) / self.h

    # -- actions ---------------------------------------------------------
    def apply(self, f) -> np.ndarray:
        """Lf in difference form (constants map to exactly zero)."""
        f = np.asarray(f, dtype=float)
        df = np.diff(f, axis=0)
        out = np.zeros_like(f)
        up = self.upper[:-1].reshape((-1,) + (1,) * (f.ndim - 1))
        lo = self.lower[1:].reshape((-1,) + (1,) * (f.ndim - 1))
        out[:-1] += up * df
        out[1:] -= lo * df
        return out

    def dirichlet_form(self, f) -> float:
        df = np.diff(np.asarray(f, dtype=float))
        return float(np.sum(self.a * df * df) / self.h)

    def mean(self, f) -> float:
        return float(np.dot(self.m, f))

    def variance(self, f) -> float:
        f = np.asarray(f, dtype=float)
        mu = self.mean(f)
        return float(np.dot(self.m, (f - mu) ** 2))

    def matrix(self):
        """Dense copy of L (small N only; for debugging and oracles)."""
        n = self.n
        A = np.diag(self.diag)
        A[np.arange(n - 1), np.arange(1, n)] = self.upper[:-1]
        A[np.arange(1, n), np.arange(n - 1)] = self.lower[1:]
        return A

    def to_matrix_market(self, path) -> None:
        """Write L as Matrix Market coordinate text."""
        rows, cols, vals = [], [], []
        for i in range(self.n):
            for j, v in ((i - 1, self.lower[i]), (i, self.diag[i]), (i + 1, self.upper[i])):
                if 0 <= j < self.n:
                    rows.append(i + 1)
                    cols.append(j + 1)
                    vals.append(v)
        with open(path, "w", newline="\n") as fh:
            fh.write("%%MatrixMarket matrix coordinate real general\n")
            fh.write(f"{self.n} {self.n} {len(vals)}\n")
            for r, c, v in zip(rows, cols, vals):
                fh.write(f"{r} {c} {v:.17g}\n")


def build_generator(scenario: Scenario, N: int = DEFAULT_N) -> DiscreteGenerator:
    """Uniform grid with N cells (N + 1 nodes) covering the scenario domain."""
    if N < 64:
        raise ValueError("N must be >= 64")
    V = scenario.potential.V
    x = np.linspace(scenario.x_lo, scenario.x_hi, N + 1)
    h = float(x[1] - x[0])
    left = np.maximum(x - 0.5 * h, x[0])
    right = np.minimum(x + 0.5 * h, x[-1])
    raw_m = _log_cell_mass(V, left, right)
    raw_a = -V(0.5 * (x[:-1] + x[1:]))
    if not (np.all(np.isfinite(raw_m)) and np.all(np.isfinite(raw_a))):
        bad = int(np.argmax(~np.isfinite(raw_m)))
        raise FloatingPointError(f"cell weight vanishes at node {bad} (x = {x[bad]:.6g})")
    c = float(logsumexp(raw_m))
    log_m = raw_m - c
    log_a = raw_a - c
    lower = np.zeros(N + 1)
    upper = np.zeros(N + 1)
    upper[:-1] = np.exp(log_a - log_m[:-1]) / h
    lower[1:] = np.exp(log_a - log_m[1:]) / h
    return DiscreteGenerator(scenario, x, h, log_m, log_a, c, lower, upper)


# ---------------------------------------------------------------------------
# Sturm bisection


def _pivmin(off_sq) -> float:
    big = float(np.max(off_sq)) if np.size(off_sq) else 1.0
    return sys.float_info.min * max(1.0, big)


def sturm_count(diag, off, shift=0.0, weight=None) -> int:
    """Number of eigenvalues of T - shift*W below zero (T symmetric tridiagonal)."""
    diag = np.ascontiguousarray(diag, dtype=float)
    off_sq = np.ascontiguousarray(np.asarray(off, dtype=float) ** 2)
    w = np.ones_like(diag) if weight is None else np.ascontiguousarray(weight, dtype=float)
    return int(_kernels.sturm_count(diag, off_sq, w, float(shift), _pivmin(off_sq)))


def kth_eigenvalue(diag, off, k: int, weight=None, rtol: float = 1e-13) -> float:
    """k-th smallest (0-based) eigenvalue of T x = lam W x by bisection."""
    diag = np.ascontiguousarray(diag, dtype=float)
    off_sq = np.ascontiguousarray(np.asarray(off, dtype=float) ** 2)
    w = np.ones_like(diag) if weight is None else np.ascontiguousarray(weight, dtype=float)
    piv = _pivmin(off_sq)
    cnt = lambda s: _kernels.sturm_count(diag, off_sq, w, s, piv)
    if k >= diag.size or (weight is not None and k >= int(np.count_nonzero(w > 0))):
        raise ValueError("eigenvalue index out of range")
    scale = float(np.max(np.abs(diag))) or 1.0
    atol = 4 * sys.float_info.epsilon * scale
    lo = 0.0
    step = scale
    while cnt(lo) > k:
        lo -= step
        step *= 2
    hi = 1.0
    doublings = 0
    while cnt(hi) <= k:
        lo = hi
        hi *= 2.0
        doublings += 1
        if doublings > 2000 or not math.isfinite(hi):
            raise ArithmeticError("eigenvalue bracket not found (degenerate weight?)")
    while hi - lo > max(rtol * max(abs(lo), abs(hi)), atol):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if cnt(mid) > k:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class SpectralGap:
    value: float
    refined: float | None
    refinement_delta: float | None   # |lam(N) - lam(2N)| / lam(2N)
    N: int

    @property
    def has_gap(self) -> bool:
        return self.value >= 1e-12

    @property
    def message(self) -> str:
        if not self.has_gap:
            return "no spectral gap at this truncation"
        return f"lambda_1 = {self.value:.8g}"

    def __float__(self):
        return self.value


def _gap_value(gen: DiscreteGenerator) -> float:
    return kth_eigenvalue(gen.s_diag, gen.s_off, 1)


def spectral_gap(gen: DiscreteGenerator, refine: bool = True) -> SpectralGap:
    """Second-smallest eigenvalue of -L in L^2(mu), with the N -> 2N delta."""
    lam = _gap_value(gen)
    ref = delta = None
    if refine:
        ref = _gap_value(build_generator(gen.scenario, 2 * gen.N))
        delta = abs(lam - ref) / abs(ref) if ref != 0 else math.inf
    return SpectralGap(lam, ref, delta, gen.N)


def gap_convergence(scenario: Scenario, Ns=(1024, 2048, 4096, 8192)):
    """Gap on a sequence of doubled grids and the observed convergence order."""
    vals = np.array([_gap_value(build_generator(scenario, N)) for N in Ns])
    d = np.abs(np.diff(vals))
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = np.log2(d[:-1] / d[1:])
    return vals, orders


def gap_truncation_trend(potential, radii, N: int = DEFAULT_N):
    """lambda_1 against the truncation radius; a clearly negative log-log
    slope signals a gap that vanishes as the domain grows."""
    from .scenario import TruncationPolicy, build_scenario

    radii = np.asarray(radii, dtype=float)
    lam = np.array([
        _gap_value(build_generator(build_scenario(
            potential, TruncationPolicy(radius=R, max_radius=max(400.0, R))), N))
        for R in radii])
    slope = float(np.polyfit(np.log(radii), np.log(lam), 1)[0])
    verdict = "vanishing" if slope < -0.5 else "stable"
    return {"radii": radii, "lambda1": lam, "slope": slope, "verdict": verdict}


# ---------------------------------------------------------------------------
# Dirichlet restriction


def _as_intervals(U):
    if U is None:
        raise ValueError("absorbing set required")
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[None, :]
    if U.ndim != 2 or U.shape[1] != 2 or np.any(U[:, 1] <= U[:, 0]):
        raise ValueError(f"bad absorbing set {U.tolist()}")
    return U[np.argsort(U[:, 0])]


@dataclass(frozen=True, eq=False)
class DirichletRestriction:
    """-L restricted to the nodes outside the closed set U, with absorption
    placed at the exact endpoints of U (shortened boundary faces)."""

    gen: DiscreteGenerator
    U: np.ndarray
    idx: np.ndarray                  # exterior node indices
    lower: np.ndarray = field(repr=False)  # L-form couplings to exterior neighbours
    upper: np.ndarray = field(repr=False)
    bcoef: np.ndarray = field(repr=False)  # total coupling to the absorbing boundary
    log_m: np.ndarray = field(repr=False)  # (possibly shortened) cell masses

    @property
    def diag(self):
        return -(self.lower + self.upper + self.bcoef)

    @property
    def s_diag(self):
        return self.lower + self.upper + self.bcoef

    @property
    def s_off(self):
        # symmetric couplings between consecutive exterior nodes (0 across U)
        lm = self.log_m
        c = self.upper[:-1] * np.exp(0.5 * (lm[:-1] - lm[1:]))
        return -c

    @property
    def x(self):
        return self.gen.x[self.idx]

    def banded(self, shift_diag):
        """Banded storage of (-L_ext + diag(shift_diag))."""
        n = self.idx.size
        ab = np.zeros((3, n))
        ab[0, 1:] = -self.upper[:-1]
        ab[1] = self.s_diag + shift_diag
        ab[2, :-1] = -self.lower[1:]
        return ab

    def apply(self, w, boundary_value=1.0):
        """(L w)_i on exterior nodes with the boundary value inserted."""
        w = np.asarray(w, dtype=float)
        out = self.diag * w + self.bcoef * boundary_value
        out[:-1] += self.upper[:-1] * w[1:]
        out[1:] += self.lower[1:] * w[:-1]
        return out


def dirichlet_restriction(gen: DiscreteGenerator, U) -> DirichletRestriction:
    ints = _as_intervals(U)
    x, h = gen.x, gen.h
    tol = 1e-3 * h
    absorb = np.zeros(x.size, dtype=bool)
    for lo, hi in ints:
        absorb |= (x >= lo - tol) & (x <= hi + tol)
    idx = np.flatnonzero(~absorb)
    if idx.size == 0:
        raise ValueError("absorbing set covers the whole domain")
    if not absorb.any():
        raise ValueError("absorbing set contains no grid node (narrower than h?)")
    for lo, hi in ints:
        if lo <= x[0] - tol and hi >= x[-1] + tol:
            raise ValueError("absorbing set covers the whole domain")
    V = gen.scenario.potential.V
    n = idx.size
    lower = np.zeros(n)
    upper = np.zeros(n)
    bcoef = np.zeros(n)
    log_m = gen.log_m[idx].copy()
    c = gen.log_c

    for k, i in enumerate(idx):
        dl = dr = None
        if i > 0 and absorb[i - 1]:
            e = max(hi for lo, hi in ints if hi < x[i])
            dl = x[i] - e
        if i < gen.N and absorb[i + 1]:
            e = min(lo for lo, hi in ints if lo > x[i])
            dr = e - x[i]
        if dl is None and dr is None:
            continue
        left = x[i] - (0.5 * dl if dl is not None else (0.5 * h if i > 0 else 0.0))
        right = x[i] + (0.5 * dr if dr is not None else (0.5 * h if i < gen.N else 0.0))
        log_m[k] = float(_log_cell_mass(V, np.array([left]), np.array([right]))[0]) - c
        if dl is not None:
            la = -float(V(x[i] - 0.5 * dl)) - c
            bcoef[k] += math.exp(la - log_m[k]) / dl
        if dr is not None:
            la = -float(V(x[i] + 0.5 * dr)) - c
            bcoef[k] += math.exp(la - log_m[k]) / dr

    # couplings between grid neighbours that are both exterior
    right_nb = np.zeros(n, dtype=bool)
    right_nb[:-1] = np.diff(idx) == 1
    ii = idx[:-1][right_nb[:-1]]
    kk = np.flatnonzero(right_nb[:-1])
    upper[kk] = np.exp(gen.log_a[ii] - log_m[kk]) / h
    lower[kk + 1] = np.exp(gen.log_a[ii] - log_m[kk + 1]) / h
    return DirichletRestriction(gen, ints, idx, lower, upper, bcoef, log_m)


def principal_dirichlet_eigenvalue(gen: DiscreteGenerator, U) -> float:
    """Smallest eigenvalue of -L on the complement of U (absorbing on dU,
    reflecting at the outer ends)."""
    R = dirichlet_restriction(gen, U)
    return kth_eigenvalue(R.s_diag, R.s_off, 0)


# ---------------------------------------------------------------------------
# linear solves


def _tridiag_ab(gen: DiscreteGenerator, phi):
    n = gen.n
    ab = np.zeros((3, n))
    ab[0, 1:] = -gen.upper[:-1]
    ab[1] = gen.s_diag + phi
    ab[2, :-1] = -gen.lower[1:]
    return ab


def smallest_eigenvalue(gen: DiscreteGenerator, phi) -> float:
    """Bottom of the spectrum of -L + phi in L^2(mu)."""
    return kth_eigenvalue(gen.s_diag + np.asarray(phi, dtype=float), gen.s_off, 0)


def resolvent_solve(gen: DiscreteGenerator, phi, g, check: bool = True) -> np.ndarray:
    """Solve (-L + phi) v = g after a Sturm-count coercivity check."""
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (gen.n,)).copy()
    g = np.broadcast_to(np.asarray(g, dtype=float), (gen.n,)).copy()
    if check and sturm_count(gen.s_diag + phi, gen.s_off, 0.0) > 0:
        lam = smallest_eigenvalue(gen, phi)
        raise NotCoerciveError(
            f"form not coercive; reduce c or enlarge A (smallest Rayleigh quotient {lam:.6g})")
    return solve_banded((1, 1), _tridiag_ab(gen, phi), g)


def resolvent_residual(gen: DiscreteGenerator, phi, g, v) -> dict:
    """Relative and backward residuals of (-L + phi) v = g."""
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (gen.n,))
    g = np.broadcast_to(np.asarray(g, dtype=float), (gen.n,))
    r = -gen.apply(v) + phi * v - g
    rn = float(np.max(np.abs(r)))
    anorm = float(np.max(np.abs(gen.s_diag + phi) + gen.lower + gen.upper))
    return {
        "relative": rn / float(np.max(np.abs(g))),
        "backward": rn / (anorm * float(np.max(np.abs(v))) + float(np.max(np.abs(g)))),
    }


# ---------------------------------------------------------------------------
# semigroup


class Evolver:
    """Time stepping of df/dt = Lf.

    ``scheme="cn"`` is Crank-Nicolson started with backward-Euler half steps
    (damps the high modes of rough data); ``scheme="be"`` is backward Euler,
    positivity preserving, used for point-mass initial data.
    Substeps never exceed min(dt_interval / 16, h).
    """

    def __init__(self, gen: DiscreteGenerator, scheme: str = "cn", startup: int = 4):
        if scheme not in ("cn", "be"):
            raise ValueError(f"unknown scheme {scheme!r}")
        self.gen = gen
        self.scheme = scheme
        self.startup = startup
        self._lu = {}

    def _factor(self, c):
        """LU of (I - c L) for the step coefficient c."""
        key = float(c)
        if key not in self._lu:
            g = self.gen
            dl = -c * g.lower[1:]
            d = 1.0 + c * g.s_diag
            du = -c * g.upper[:-1]
            dl_, d_, du_, du2, ipiv, info = lapack.dgttrf(dl, d, du)
            if info != 0:
                raise np.linalg.LinAlgError(f"dgttrf failed ({info})")
            self._lu[key] = (dl_, d_, du_, du2, ipiv)
        return self._lu[key]

    def _solve(self, c, b):
        dl, d, du, du2, ipiv = self._factor(c)
        x, info = lapack.dgttrs(dl, d, du, du2, ipiv, b)
        if info != 0:
            raise np.linalg.LinAlgError(f"dgttrs failed ({info})")
        return x

    def _substeps(self, tau):
        dt_max = min(tau / 16.0, self.gen.h)
        n = max(16, int(math.ceil(tau / dt_max - 1e-9)))
        return n, tau / n

    def advance(self, f, tau, fresh=False):
        """Advance f (vector or n-by-k block) by time tau."""
        f = np.array(f, dtype=float, order="F")
        if tau <= 0:
            return f
        n, dt = self._substeps(tau)
        start = 0
        if self.scheme == "cn" and fresh and self.startup > 0:
            k = 2 * min(self.startup // 2, n)
            for _ in range(k):
                f = self._solve(0.5 * dt, f)  # backward Euler, half step
            start = k // 2
        for _ in range(start, n):
            if self.scheme == "be":
                f = self._solve(dt, f)
            else:
                f = self._solve(0.5 * dt, f + 0.5 * dt * self.gen.apply(f))
        return f

    def evolve(self, f0, times):
        """States at each of the (sorted, >= 0) times, starting from f0 at 0."""
        times = np.asarray(times, dtype=float)
        if np.any(np.diff(times) < 0) or np.any(times < 0):
            raise ValueError("times must be sorted and nonnegative")
        f = np.array(f0, dtype=float)
        out = np.empty((times.size,) + f.shape)
        t_prev = 0.0
        fresh = True
        for j, t in enumerate(times):
            if t > t_prev:
                f = self.advance(f, t - t_prev, fresh=fresh)
                fresh = False
                t_prev = t
            out[j] = f
        return out


def semigroup_step(gen: DiscreteGenerator, f, t: float, scheme: str = "cn") -> np.ndarray:
    """Approximate P_t f."""
    if not t > 0:
        raise ValueError("t must be > 0")
    return Evolver(gen, scheme).advance(f, t, fresh=True)
