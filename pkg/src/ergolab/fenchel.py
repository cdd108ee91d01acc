"""Young functions G(u) = u F(u) and their Legendre duals.

Only the ln_+^beta family is built in; other F can be passed as callables.
The dual is computed by a log-grid scan followed by golden-section
refinement, vectorised over the argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class FSpec:
    """F, G = uF(u), the dual G* and the F-Sobolev constants (C_F, D_F)."""

    F: Callable
    tag: str
    C_F: float = 1.0
    D_F: float = 0.0
    convexity_start: float = 0.0   # G is convex on [convexity_start, inf)
    u_max: float = 1e300

    def G(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return np.where(u > 0, u * self.F(u), 0.0)

    def dual(self, t):
        return fenchel_dual(self, t)

    def dual_inverse(self, y):
        return fenchel_dual_inverse(self, y)


def logplus_power(beta: float, C_F: float = 1.0, D_F: float = 0.0) -> FSpec:
    """F(u) = ln_+(u)^beta."""
    if not beta > 0:
        raise ValueError("beta must be > 0")

    def F(u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(u > 1.0, np.log(np.maximum(u, 1.0)) ** beta, 0.0)

    start = math.exp(max(0.0, 1.0 - beta)) if beta < 1 else 0.0
    return FSpec(F, f"ln+^{beta:g}", C_F, D_F, start)


@dataclass(frozen=True)
class DualValue:
    value: np.ndarray
    unbounded: np.ndarray   # sup = +inf (G sublinear along the scan)


def _objective(spec, t, u):
    return t * u - spec.G(u)


def fenchel_dual(spec: FSpec, t, *, full: bool = False, n_scan: int = 400, iters: int = 120):
    """G*(t) = sup_{u > 0} (t u - G(u)).

    A log-spaced scan brackets the maximiser, golden section refines it.
    Returns +inf where the objective still increases at the end of the scan.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    u = np.concatenate([[0.0], np.logspace(-12, math.log10(spec.u_max), n_scan)])
    vals = t[:, None] * u[None, :] - spec.G(u)[None, :]
    k = np.argmax(vals, axis=1)
    unbounded = k == u.size - 1
    lo = u[np.maximum(k - 1, 0)]
    hi = u[np.minimum(k + 1, u.size - 1)]
    # golden section on [lo, hi]; the objective is concave where G is convex,
    # and the bracket is a single scan cell, so local unimodality suffices
    a, b = lo.copy(), hi.copy()
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc = _objective(spec, t, c)
    fd = _objective(spec, t, d)
    for _ in range(iters):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c_new = b - _INVPHI * (b - a)
        d_new = a + _INVPHI * (b - a)
        c, d = c_new, d_new
        fc = _objective(spec, t, c)
        fd = _objective(spec, t, d)
    best = np.maximum.reduce([vals[np.arange(t.size), k], fc, fd])
    value = np.where(unbounded, np.inf, best)
    if full:
        return DualValue(value, unbounded)
    return value if value.size > 1 else float(value[0])


def fenchel_dual_inverse(spec: FSpec, y, *, tol: float = 1e-12):
    """Smallest t >= 0 with G*(t) >= y, by bisection on the computed dual."""
    y = float(y)
    g0 = float(fenchel_dual(spec, 0.0))
    if y < g0:
        raise ValueError(f"y must be >= G*(0) = {g0}")
    lo, hi = 0.0, 1.0
    while float(fenchel_dual(spec, hi)) < y:
        lo, hi = hi, 2 * hi
        if hi > 1e300:
            raise OverflowError("inverse out of range")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if float(fenchel_dual(spec, mid)) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
