# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Sturm counts and reflected Euler-Maruyama paths.

The random stream is a pure function of (seed, path, counter), so the
numpy fallback in ``_fallback.py`` reproduces it draw for draw.
"""

from libc.math cimport sqrt, log, cos, exp, floor, M_PI
from libc.stdint cimport uint64_t, int64_t, int8_t

cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t _BRIDGE = 0x4000000000000000ULL
cdef double _TWO53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _path_key(uint64_t seed, uint64_t path) noexcept nogil:
    return _mix(_mix(seed + _GOLDEN) ^ _mix(path * _GOLDEN + 1ULL))


cdef inline double _uniform(uint64_t key, uint64_t counter) noexcept nogil:
    # open interval (0, 1), 53 bits
    return (<double>(_mix(key ^ _mix(counter)) >> 11) + 0.5) * _TWO53


cdef inline double _normal(uint64_t key, uint64_t step) noexcept nogil:
    cdef double u1 = _uniform(key, 2 * step)
    cdef double u2 = _uniform(key, 2 * step + 1)
    return sqrt(-2.0 * log(u1)) * cos(2.0 * M_PI * u2)


def uniforms(uint64_t seed, uint64_t path, uint64_t[::1] counters):
    """Raw stream access, used to cross-check the fallback generator."""
    import numpy as np
    out = np.empty(counters.shape[0])
    cdef double[::1] o = out
    cdef uint64_t key = _path_key(seed, path)
    cdef Py_ssize_t i
    for i in range(counters.shape[0]):
        o[i] = _uniform(key, counters[i])
    return out


def sturm_count(const double[::1] diag, const double[::1] off_sq,
                const double[::1] weight, double shift, double pivmin):
    """Number of eigenvalues of T - shift*diag(weight) that are < 0.

    ``off_sq`` holds the squared off-diagonal (length n-1).
    """
    cdef Py_ssize_t n = diag.shape[0], i
    cdef long count = 0
    cdef double d
    with nogil:
        d = diag[0] - shift * weight[0]
        if d < pivmin and d > -pivmin:
            d = -pivmin
        if d < 0.0:
            count += 1
        for i in range(1, n):
            d = diag[i] - shift * weight[i] - off_sq[i - 1] / d
            if d < pivmin and d > -pivmin:
                d = -pivmin
            if d < 0.0:
                count += 1
    return count


cdef inline double _interp(const double[::1] tab, double lo, double inv_dx,
                           Py_ssize_t nt, double x) noexcept nogil:
    cdef double s = (x - lo) * inv_dx
    cdef Py_ssize_t i
    cdef double f
    if s <= 0.0:
        return tab[0]
    if s >= nt - 1:
        return tab[nt - 1]
    i = <Py_ssize_t>floor(s)
    f = s - i
    return tab[i] + f * (tab[i + 1] - tab[i])


def em_paths(double x0, double lo, double hi, double xmin, double xmax,
             double dt, int64_t max_steps,
             const double[::1] drift_tab, const double[::1] weight_tab,
             double tab_lo, double tab_dx, double theta,
             uint64_t seed, int64_t path_start, int64_t path_stop, int bridge,
             double[::1] out_a, int64_t[::1] out_steps,
             int8_t[::1] out_status, int8_t[::1] out_reflected):
    """Simulate paths ``path_start..path_stop-1`` until they enter (lo, hi).

    Writes the accumulated exponent, the step count, a status (1 = hit,
    0 = step cap reached) and an outer-reflection flag per path.
    """
    cdef Py_ssize_t nt = drift_tab.shape[0]
    cdef double inv_dx = 1.0 / tab_dx
    cdef double sq = sqrt(2.0 * dt)
    cdef int64_t p, step, j
    cdef uint64_t key
    cdef double x, xn, a, u
    cdef int hit, refl
    with nogil:
        for p in range(path_start, path_stop):
            j = p - path_start
            key = _path_key(seed, <uint64_t>p)
            x = x0
            a = 0.0
            refl = 0
            out_status[j] = 0
            out_steps[j] = max_steps
            if x > lo and x < hi:
                out_status[j] = 1
                out_steps[j] = 0
                out_a[j] = 0.0
                out_reflected[j] = 0
                continue
            for step in range(max_steps):
                a += theta * _interp(weight_tab, tab_lo, inv_dx, nt, x) * dt
                xn = (x - _interp(drift_tab, tab_lo, inv_dx, nt, x) * dt
                      + sq * _normal(key, <uint64_t>step))
                if xn > xmax:
                    xn = 2.0 * xmax - xn
                    refl = 1
                if xn < xmin:
                    xn = 2.0 * xmin - xn
                    refl = 1
                    if xn > xmax:
                        xn = xmax
                hit = 0
                if x >= hi:
                    if xn < hi:
                        hit = 1
                    elif bridge:
                        u = _uniform(key, _BRIDGE | <uint64_t>step)
                        if u < exp(-(x - hi) * (xn - hi) / dt):
                            hit = 1
                else:
                    if xn > lo:
                        hit = 1
                    elif bridge:
                        u = _uniform(key, _BRIDGE | <uint64_t>step)
                        if u < exp(-(lo - x) * (lo - xn) / dt):
                            hit = 1
                if hit:
                    out_status[j] = 1
                    out_steps[j] = step + 1
                    break
                x = xn
            out_a[j] = a
            out_reflected[j] = refl
    return None
