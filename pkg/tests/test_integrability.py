import math
import warnings

import numpy as np
import pytest
from scipy.special import factorial2

from ergolab.generator import build_generator
from ergolab.integrability import (CutoffPsi2, RecursionViolation, a_lower_bound,
                                   condition_constants, constants_from_certificate,
                                   cutoff_psi2, exponential_moment, interval_poincare_constant,
                                   moment_sequence, phi_lyap_to_poincare_check, recursion_check)
from ergolab.lyapunov import ExpPower, certify_drift
from ergolab.scenario import Cauchy, Power, TruncationPolicy, build_scenario

PHI2 = lambda x: (4 + x * x) / 8          # OU with W = e^{x^2/4}: LW/W + phi^2 = 1 - x^2/8
PSI2 = lambda x: x * x


@pytest.fixture(scope="module")
def gauss(ou, ou_gen, ou_wide):
    cert = certify_drift(ou, ou_gen, ExpPower(0.25), PHI2, (-3.0, 3.0))
    cc = constants_from_certificate(ou_wide, cert, PHI2, PSI2)
    ms = moment_sequence(ou_wide, cc.psi2, 30)
    return cert, cc, ms


def test_gaussian_constants_closed_form(gauss):
    _, cc, _ = gauss
    # alpha = sup 8x^2/(4+x^2) -> 8 (attained at the domain edge), beta = 1/2 at x = 2,
    # delta = 8x^2/(4+x^2)^3 has its maximum 2/27 at x^2 = 2
    assert cc.alpha == pytest.approx(8 * 256 / 260, rel=1e-6)
    assert cc.beta == pytest.approx(0.5, rel=1e-6)
    assert cc.delta == pytest.approx(2 / 27, rel=1e-6)
    assert cc.gamma == pytest.approx(9 / (13 / 8), rel=1e-3)
    assert cc.K_radius == 0.0
    assert cc.valid and cc.a_prime_max > 0.25


def test_gaussian_moments_double_factorial(gauss):
    _, _, ms = gauss
    ref = np.array([1.0] + [factorial2(2 * n - 1) for n in range(1, 16)])
    np.testing.assert_allclose(ms.values[:16], ref, rtol=1e-6)
    assert ms.values[5] == pytest.approx(945.0, rel=1e-9)
    assert ms.log_convex


def test_gaussian_ratio_below_two(gauss):
    # beta_n / (n beta_{n-1}) = (2n - 1)/n < 2
    _, _, ms = gauss
    assert np.all(ms.ratios < 2.0)


def test_gaussian_recursion_and_exponential_moment(gauss, ou_wide):
    _, cc, ms = gauss
    rep = recursion_check(ms, cc)
    assert rep.worst_slack > 0
    assert rep.factorial_bound_ok
    em = exponential_moment(ou_wide, cc.psi2, 0.25, moments=ms, constants=cc, report=rep)
    assert em.direct == pytest.approx(math.sqrt(2), rel=1e-6)
    assert em.series == pytest.approx(math.sqrt(2), rel=1e-6)
    assert em.consistent and em.within_bound


def test_exponential_moment_zero_coefficient(gauss, ou_wide):
    _, cc, ms = gauss
    em = exponential_moment(ou_wide, cc.psi2, 0.0, moments=ms)
    assert em.direct == pytest.approx(1.0, abs=1e-12)
    assert em.series == pytest.approx(1.0, abs=1e-12)


def test_exponential_moment_rejects_a_prime_too_large(gauss, ou_wide):
    _, cc, ms = gauss
    with pytest.raises(ValueError):
        exponential_moment(ou_wide, cc.psi2, 1.0, moments=ms, constants=cc)


def test_direct_quadrature_divergence_flagged(ou):
    # exp(0.5 x^2) against the Gaussian: not integrable
    with pytest.raises(ValueError, match="not resolved"):
        exponential_moment(ou, PSI2, 0.5, moments=moment_sequence(ou.with_radius(16.0), PSI2, 4))


def test_zero_psi_is_vacuous(ou_wide):
    ms = moment_sequence(ou_wide, lambda x: 0 * x, 10)
    assert ms.values[0] == pytest.approx(1.0)
    np.testing.assert_array_equal(ms.values[1:], 0.0)
    cc = condition_constants(ou_wide, PHI2, lambda x: 0 * x, (-3, 3), b_bar=1.0)
    assert recursion_check(ms, cc).vacuous


def test_moment_tail_reduction_warns():
    sc = build_scenario(Power(2.0)).with_radius(5.0)
    with pytest.warns(UserWarning, match="reduced"):
        ms = moment_sequence(sc, PSI2, 30)
    assert ms.reduced_from == 30 and ms.n_max < 30


def test_constant_phi_lipschitz_psi(ou_wide):
    # phi = 1, psi^2 = sqrt(1 + x^2): alpha = 1/4 asymptotically, beta = delta = 0
    cc = condition_constants(ou_wide, lambda x: 1 + 0 * x, lambda x: np.sqrt(1 + x * x),
                             (-3, 3), b_bar=1.0)
    assert cc.valid and cc.delta == 0.0 and cc.beta == 0.0
    assert cc.alpha == pytest.approx(0.25, rel=1e-2)
    assert cc.a == pytest.approx(1.01 * 0.5 * math.sqrt(4 * cc.alpha), rel=1e-12)


def test_power_family_needs_K_and_recursion_holds():
    # mu ~ exp(-|x|^3), phi^2 = x^4 (vanishes at 0), psi^2 = |x|^3
    sc = build_scenario(Power(3.0)).with_radius(6.0)
    g = build_generator(sc, 4096)
    phi2 = lambda x: x ** 4
    cert = certify_drift(sc, g, ExpPower(0.5, 3.0), phi2, (-2.0, 2.0))
    assert cert.valid
    for ramp in (None, 1.0):
        cc = constants_from_certificate(sc, cert, phi2, lambda x: np.abs(x) ** 3, ramp=ramp)
        assert cc.valid and cc.K_radius > 0
        ms = moment_sequence(sc, cc.psi2, 30)
        rep = recursion_check(ms, cc)
        em = exponential_moment(sc, cc.psi2, 0.5 * cc.a_prime_max, moments=ms, constants=cc,
                                report=rep)
        assert em.consistent and em.within_bound


def test_cauchy_log_psi_branch():
    # phi^2 = a/|x| (a > 1) with psi^2 = ln|x| beyond K
    sc = build_scenario(Cauchy(1.0), TruncationPolicy(radius=200.0))
    cc = condition_constants(sc, lambda x: 2.0 / np.abs(x), lambda x: np.log(np.maximum(np.abs(x), 1.0)),
                             (-2.0, 2.0), b_bar=1.0)
    assert cc.valid and cc.K_radius > 0 and cc.delta < 1


def test_contraction_failure_reported(ou_wide):
    # phi^2 = (1 + x^2)^-2 gives delta(x) = 4 x^2, so delta >= 1 beyond |x| = 1/2
    cc = condition_constants(ou_wide, lambda x: (1 + x * x) ** -2.0, PSI2, (-1, 1), K=1.0)
    assert not cc.valid
    assert "contraction" in cc.message and cc.violating_region is not None


def test_cutoff_is_c1():
    ps = cutoff_psi2(PSI2, 1.0, 0.5)
    x = np.array([0.5, 1.0, 1.25, 1.5, 2.0])
    np.testing.assert_allclose(ps(x), [0, 0, 1.5625 * 0.5, 2.25, 4.0])
    eps = 1e-6
    xs = np.array([1.0 + eps, 1.5 - eps, 1.5 + eps])
    np.testing.assert_allclose(ps.deriv(xs), [0.0, 3.0, 3.0], atol=1e-4)


def test_recursion_violation_detected(gauss):
    _, cc, ms = gauss
    bad = type(cc)(**{**cc.__dict__, "alpha": 1e-3, "beta": 1e-3, "gamma": 1e-3})
    with pytest.raises(RecursionViolation, match="n ="):
        recursion_check(ms, bad)


def test_a_formula():
    assert a_lower_bound(4.0, 0.0, 0.0) == pytest.approx(2.0)
    assert a_lower_bound(8.0, 0.5, 0.0) == pytest.approx(0.5 * (1 + math.sqrt(1 + 32)))


def test_interval_poincare_constant():
    assert interval_poincare_constant((-1, 1)) == pytest.approx(4 / math.pi ** 2)


def test_weighted_inequality_ou(gauss, ou, ou_gen):
    cert, _, _ = gauss
    rep = phi_lyap_to_poincare_check(ou, ou_gen, cert)
    assert rep.worst_slack >= -1e-8
    # h = 1: mu(phi^2) <= b_bar mu(C)
    assert rep.constant_case["lhs"] == pytest.approx(5 / 8, rel=1e-6)
    assert rep.constant_case["lhs"] <= rep.constant_case["rhs"]
    assert rep.slacks["bump-right"] > 0
