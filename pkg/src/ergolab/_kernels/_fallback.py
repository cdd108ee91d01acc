"""Pure-Python / numpy versions of the compiled kernels.

Same signatures and the same random stream as ``_core``; the path loop is
vectorised across paths instead of running path by path.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_BRIDGE = np.uint64(0x4000000000000000)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_TWO53 = 1.0 / 9007199254740992.0


def _mix(z):
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _path_key(seed, paths):
    paths = np.asarray(paths, dtype=np.uint64)
    s = _mix(np.array([seed], dtype=np.uint64) + _GOLDEN)
    return _mix(s ^ _mix(paths * _GOLDEN + np.uint64(1)))


def _uniform(keys, counter):
    c = _mix(np.array([counter], dtype=np.uint64))
    bits = _mix(keys ^ c) >> _S11
    return (bits.astype(np.float64) + 0.5) * _TWO53


def uniforms(seed, path, counters):
    key = _path_key(seed, [path])[0]
    c = _mix(np.asarray(counters, dtype=np.uint64))
    bits = _mix(key ^ c) >> _S11
    return (bits.astype(np.float64) + 0.5) * _TWO53


def sturm_count(diag, off_sq, weight, shift, pivmin):
    d_all = (np.asarray(diag) - shift * np.asarray(weight)).tolist()
    e2 = np.asarray(off_sq).tolist()
    count = 0
    d = d_all[0]
    if -pivmin < d < pivmin:
        d = -pivmin
    if d < 0.0:
        count += 1
    for i in range(1, len(d_all)):
        d = d_all[i] - e2[i - 1] / d
        if -pivmin < d < pivmin:
            d = -pivmin
        if d < 0.0:
            count += 1
    return count


def _interp(tab, lo, inv_dx, x):
    nt = tab.shape[0]
    s = (x - lo) * inv_dx
    i = np.clip(np.floor(s), 0, nt - 2).astype(np.intp)
    f = s - i
    out = tab[i] + f * (tab[i + 1] - tab[i])
    out = np.where(s <= 0.0, tab[0], out)
    return np.where(s >= nt - 1, tab[nt - 1], out)


def em_paths(x0, lo, hi, xmin, xmax, dt, max_steps, drift_tab, weight_tab,
             tab_lo, tab_dx, theta, seed, path_start, path_stop, bridge,
             out_a, out_steps, out_status, out_reflected):
    n = path_stop - path_start
    inv_dx = 1.0 / tab_dx
    sq = np.sqrt(2.0 * dt)
    keys = _path_key(seed, np.arange(path_start, path_stop, dtype=np.uint64))
    x = np.full(n, float(x0))
    a = np.zeros(n)
    refl = np.zeros(n, dtype=np.int8)
    out_status[:n] = 0
    out_steps[:n] = max_steps
    active = np.ones(n, dtype=bool)
    if lo < x0 < hi:
        out_status[:n] = 1
        out_steps[:n] = 0
        out_a[:n] = 0.0
        out_reflected[:n] = 0
        return None
    idx = np.arange(n)
    right = x0 >= hi
    for step in range(max_steps):
        if idx.size == 0:
            break
        k = keys[idx]
        xi = x[idx]
        a[idx] += theta * _interp(weight_tab, tab_lo, inv_dx, xi) * dt
        u1 = _uniform(k, 2 * step)
        u2 = _uniform(k, 2 * step + 1)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        xn = xi - _interp(drift_tab, tab_lo, inv_dx, xi) * dt + sq * z
        up = xn > xmax
        xn = np.where(up, 2.0 * xmax - xn, xn)
        dn = xn < xmin
        xn = np.where(dn, 2.0 * xmin - xn, xn)
        xn = np.where(dn & (xn > xmax), xmax, xn)
        refl[idx] |= (up | dn).astype(np.int8)
        if right:
            hit = xn < hi
            if bridge:
                u = _uniform(k, int(_BRIDGE) | step)
                hit |= u < np.exp(-(xi - hi) * (xn - hi) / dt)
        else:
            hit = xn > lo
            if bridge:
                u = _uniform(k, int(_BRIDGE) | step)
                hit |= u < np.exp(-(lo - xi) * (lo - xn) / dt)
        done = idx[hit]
        out_status[done] = 1
        out_steps[done] = step + 1
        x[idx] = xn
        idx = idx[~hit]
    out_a[:n] = a
    out_reflected[:n] = refl
    return None
