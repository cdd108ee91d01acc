"""Hypothesis property tests for structural invariants."""
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import eigh_tridiagonal

from ergolab._kernels import _fallback
from ergolab import _kernels
from ergolab.fenchel import logplus_power
from ergolab.generator import Evolver, sturm_count
from ergolab.integrability import condition_constants, moment_sequence

SET = settings(max_examples=40, deadline=None,
               suppress_health_check=[HealthCheck.function_scoped_fixture])
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@SET
@given(arrays(float, 40, elements=finite), arrays(float, 39, elements=st.floats(0.01, 5)),
       st.floats(-15, 15))
def test_sturm_count_matches_eigenvalues(d, e, shift):
    lam = eigh_tridiagonal(d, e, eigvals_only=True)
    if np.min(np.abs(lam - shift)) < 1e-8:
        return  # shift on an eigenvalue: count is ambiguous
    assert sturm_count(d, e, shift) == int(np.sum(lam < shift))


@SET
@given(st.sampled_from([1.0, 2.0, 3.0]), st.floats(0.0, 50.0), st.floats(0.0, 200.0))
def test_young_inequality(beta, t, u):
    spec = logplus_power(beta)
    assert t * u <= float(spec.G(np.array([u]))[0]) + float(spec.dual(t)) + 1e-8 * (1 + t * u)


@SET
@given(st.floats(0.5, 4.0))
def test_moments_log_convex(ou_wide, q):
    ms = moment_sequence(ou_wide, lambda x: np.abs(x) ** q, 12)
    lv = ms.log_values
    assert np.all(lv[2:] + lv[:-2] - 2 * lv[1:-1] >= -1e-9)


@SET
@given(st.floats(0.1, 10.0))
def test_constants_scale_with_psi(ou_wide, s):
    phi2, dphi2 = (lambda x: (4 + x * x) / 8), (lambda x: x / 4)
    c1 = condition_constants(ou_wide, phi2, lambda x: x * x, (-3, 3), b_bar=1.0,
                             dphi2=dphi2, dpsi2=lambda x: 2 * x)
    cs = condition_constants(ou_wide, phi2, lambda x: s * x * x, (-3, 3), b_bar=1.0,
                             dphi2=dphi2, dpsi2=lambda x: 2 * s * x)
    assert cs.delta == c1.delta
    assert cs.alpha == pytest.approx(s * s * c1.alpha, rel=1e-12)
    assert cs.beta == pytest.approx(s * c1.beta, rel=1e-12)
    assert cs.gamma == pytest.approx(s * c1.gamma, rel=1e-12)
    assert cs.a == pytest.approx(s * c1.a, rel=1e-12)


@SET
@given(st.floats(0.2, 3.0))
def test_moments_scale_with_psi(ou_wide, s):
    m1 = moment_sequence(ou_wide, lambda x: x * x, 8)
    ms = moment_sequence(ou_wide, lambda x: s * x * x, 8)
    n = np.arange(9)
    np.testing.assert_allclose(ms.log_values, m1.log_values + n * math.log(s), atol=1e-10)


@SET
@given(arrays(float, 6, elements=st.floats(-1, 1)), st.floats(0.01, 2.0),
       st.sampled_from(["cn", "be"]))
def test_semigroup_conserves_mean_and_contracts(ou_small, c, t, scheme):
    g = ou_small
    f0 = np.polynomial.polynomial.polyval(np.clip(g.x, -4, 4), c)
    ft = Evolver(g, scheme).advance(f0, t, fresh=True)
    assert g.mean(ft) == pytest.approx(g.mean(f0), abs=1e-10 * (1 + np.max(np.abs(f0))))
    assert g.variance(ft) <= g.variance(f0) * (1 + 1e-10) + 1e-14


@SET
@given(st.integers(0, 2**64 - 1), st.integers(0, 2**40), st.integers(0, 2**50))
def test_rng_parity_and_range(seed, path, c0):
    c = np.arange(c0, c0 + 64, dtype=np.uint64)
    u = _fallback.uniforms(seed, path, c)
    assert np.all((u > 0) & (u < 1))
    np.testing.assert_array_equal(u, _fallback.uniforms(seed, path, c))
    if _kernels.BACKEND == "cython":
        from ergolab._kernels import _core
        np.testing.assert_array_equal(np.asarray(_core.uniforms(seed, path, c)), u)
