import math

import numpy as np
import pytest

from ergolab.fenchel import logplus_power
from ergolab.generator import NotCoerciveError, build_generator
from ergolab.lyapunov import (ExpPower, certify_drift, construct_entropic_lyapunov,
                              construct_fsobolev_lyapunov, construct_poincare_lyapunov,
                              discrete_log_ratio)
from ergolab.scenario import LogPower, Power, build_scenario, measure_of_set


def test_exp_power_ratio_closed_form(ou):
    # W = e^{x^2/4}: LW/W = 1/2 - x^2/4 for V = x^2/2
    x = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(ExpPower(0.25).ratio(ou.potential, x), 0.5 - x * x / 4, atol=1e-14)


def test_discrete_ratio_second_order(ou):
    errs = []
    for N in (1024, 2048):
        g = build_generator(ou, N)
        W = ExpPower(0.25)
        r = discrete_log_ratio(g, W.log_W(g.x))
        inner = np.abs(g.x) < 3
        errs.append(np.max(np.abs(r - W.ratio(ou.potential, g.x))[inner]))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_ou_gaussian_certificate(ou, ou_gen):
    # LW + (x^2/8) W <= b 1_U with W = e^{x^2/4}; on U = (-2, 2) the worst b is 1/2 at 0
    phi2 = lambda x: x * x / 8
    cert = certify_drift(ou, ou_gen, ExpPower(0.25), phi2, (-2.0, 2.0))
    assert cert.valid
    assert cert.b == pytest.approx(0.5, rel=1e-6)
    assert cert.discrepancy < 5e-4        # O(h^2 x^4) near the domain edge


def test_constant_candidate_fails(ou, ou_gen):
    cert = certify_drift(ou, ou_gen, np.ones(ou_gen.n), 1.0, (-1.0, 1.0))
    assert not cert.valid
    assert cert.worst_margin == pytest.approx(1.0, rel=1e-12)


def test_poincare_construction_ou(ou, ou_gen):
    ly = construct_poincare_lyapunov(ou, ou_gen, (-1.0, 1.0))
    c_ref = measure_of_set(ou, (-1, 1)) / 8       # C_P = 1 so 1/(4 C_P) > 1/8
    assert ly.c == pytest.approx(c_ref, rel=1e-12)
    assert ly.c == pytest.approx(0.085336, abs=1e-6)
    assert ly.min_v > 0
    assert ly.margin <= 1e-6 * ly.details["ratio_norm"]
    assert ly.certificate.valid


def test_entropic_construction_ou(ou, ou_gen):
    h = lambda x: x * x / 4
    ent = construct_entropic_lyapunov(ou, ou_gen, h, 2.0)
    # b = 2 mu(e^{x^2/4}) = 2 sqrt(2) erf(R/2) on [-R, R]
    from scipy.special import erf

    assert ent.b == pytest.approx(2 * math.sqrt(2) * erf(ou.radius / 2), rel=1e-6)
    assert ent.certificate.valid
    assert ent.min_v > 0


def test_entropic_rejects_non_integrable_h(ou, ou_gen):
    with pytest.raises(ValueError, match="integrable"):
        construct_entropic_lyapunov(ou, ou_gen, lambda x: x * x, 2.0)


def test_entropic_zero_h_is_trivial(ou, ou_gen):
    ent = construct_entropic_lyapunov(ou, ou_gen, lambda x: 0 * x, 2.0)
    assert ent.certificate.valid
    assert not ent.region.any()


@pytest.mark.parametrize("alpha", [1.5, 2.0, 3.0])
def test_fsobolev_matched_exponent(alpha):
    sc = build_scenario(Power(alpha))
    g = build_generator(sc)
    beta = 2 * (1 - 1 / alpha)
    h = 0.25 * np.abs(sc.potential.V(g.x)) ** beta
    r = construct_fsobolev_lyapunov(sc, g, logplus_power(beta, C_F=0.25), h)
    assert r.certificate.valid


def test_fsobolev_strengthened_exponent_fails():
    sc = build_scenario(Power(1.5))
    g = build_generator(sc)
    b2 = 1.5 * 2 * (1 - 1 / 1.5)
    h = 0.25 * np.abs(sc.potential.V(g.x)) ** b2
    with pytest.raises(NotCoerciveError):
        construct_fsobolev_lyapunov(sc, g, logplus_power(b2, C_F=0.25), h)


def test_logpower_far_field_ratio_sign():
    pot = LogPower(2.0)
    W = ExpPower(0.5, 2.0)
    lx = np.linspace(1.0, 40.0, 20)
    assert np.all(np.isfinite(W.log_neg_ratio(pot, lx)))
