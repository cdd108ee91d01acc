import math
import warnings

import numpy as np
import pytest
from scipy.special import pbdv

from ergolab.generator import build_generator
from ergolab.hitting import (MCEstimate, MomentQuery, ThresholdError, critical_theta, fk_moment,
                             fk_residual, hill_tail_index, lp_membership_of_moment, mc_moment,
                             strong_markov_check)


def ou_exit_moment(x, theta):
    """E_x exp(theta T_1) for OU started at x >= 1 (parabolic cylinder form)."""
    return math.exp((x * x - 1) / 4) * pbdv(theta, x)[0] / pbdv(theta, 1.0)[0]


def test_ou_threshold_is_two(ou_gen):
    assert critical_theta(ou_gen, (-1.0, 1.0)) == pytest.approx(2.0, rel=1e-5)


@pytest.mark.parametrize("theta", [0.3, 1.0, 1.6])
def test_fk_matches_parabolic_cylinder(ou_gen, theta):
    w = fk_moment(ou_gen, MomentQuery((-1.0, 1.0), theta))
    for x in (1.5, 2.0, 3.0):
        assert np.interp(x, ou_gen.x, w) == pytest.approx(ou_exit_moment(x, theta), rel=2e-5)


def test_fk_symmetric_and_one_on_U(ou_gen):
    w = fk_moment(ou_gen, MomentQuery((-1.0, 1.0), 1.0))
    inside = np.abs(ou_gen.x) < 1
    np.testing.assert_array_equal(w[inside], 1.0)
    np.testing.assert_allclose(w, w[::-1], rtol=1e-10)


def test_fk_residual_small(ou_gen):
    q = MomentQuery((-1.0, 1.0), 1.2)
    w = fk_moment(ou_gen, q)
    assert fk_residual(ou_gen, q, w)["backward"] < 1e-13


def test_threshold_error_beyond_critical(ou_gen):
    with pytest.raises(ThresholdError):
        fk_moment(ou_gen, MomentQuery((-1.0, 1.0), 2.1))


def test_query_validation():
    with pytest.raises(ValueError):
        MomentQuery((1.0, -1.0), 1.0)
    with pytest.raises(ValueError):
        MomentQuery((-1.0, 1.0), 0.0)


def test_weighted_threshold_positive_and_scales(ou_gen):
    t1 = critical_theta(ou_gen, (-1.0, 1.0), h=lambda x: x * x)
    t2 = critical_theta(ou_gen, (-1.0, 1.0), h=lambda x: 2 * x * x)
    assert t1 > 0
    # bisection stops at an absolute width of a few eps * max|diag|
    assert t2 == pytest.approx(t1 / 2, rel=1e-7)


def test_weighted_threshold_warns_on_vanishing_h(ou_small):
    with pytest.warns(UserWarning, match="vanishes"):
        critical_theta(ou_small, (-1.0, 1.0), h=lambda x: np.where(np.abs(x) > 3, 1.0, 0.0))


def test_hill_estimator_recovers_pareto_index(rng):
    kappa = 1.7
    A = rng.exponential(1 / kappa, 200_000)     # exp(A) is Pareto(kappa)
    assert hill_tail_index(A) == pytest.approx(kappa, rel=0.05)


def test_mc_close_to_fk_with_bridge(ou):
    theta, x0 = 0.5, 2.0
    q = MomentQuery((-1.0, 1.0), theta, x0=x0)
    est = mc_moment(ou, q, n_paths=20_000, dt=1e-3, seed=3, bridge=True, theta_star=2.0)
    assert abs(est.estimate - ou_exit_moment(x0, theta)) < 4 * est.stderr
    assert not est.flagged_divergent
    assert est.truncation_hits == 0


def test_mc_deterministic_across_threads(ou):
    q = MomentQuery((-1.0, 1.0), 1.0, x0=2.0)
    a = mc_moment(ou, q, n_paths=10_000, seed=11, threads=1, theta_star=2.0)
    b = mc_moment(ou, q, n_paths=10_000, seed=11, threads=3, theta_star=2.0)
    c = mc_moment(ou, q, n_paths=10_000, seed=12, threads=1, theta_star=2.0)
    assert a.estimate == b.estimate and a.stderr == b.stderr
    assert a.estimate != c.estimate


def test_mc_flags_supercritical_theta(ou):
    q = MomentQuery((-1.0, 1.0), 2.4, x0=2.0)
    est = mc_moment(ou, q, n_paths=20_000, seed=0, theta_star=2.0)
    assert est.flagged_divergent
    assert est.notes


def test_mc_csv_row_fields(ou):
    q = MomentQuery((-1.0, 1.0), 0.5, x0=2.0)
    est = mc_moment(ou, q, n_paths=2_000, seed=0, theta_star=2.0)
    assert tuple(est.csv_row()) == MCEstimate.CSV_FIELDS


def test_mc_input_validation(ou):
    q = MomentQuery((-1.0, 1.0), 0.5, x0=2.0)
    with pytest.raises(ValueError):
        mc_moment(ou, q, n_paths=10)
    with pytest.raises(ValueError):
        mc_moment(ou, MomentQuery((-1.0, 1.0), 0.5), n_paths=2000)


def test_lp_membership_ou(ou, ou_small):
    r = lp_membership_of_moment(ou, ou_small, (-1.0, 1.0), 1.0, 2.0)
    assert r.verdict == "finite"
    with pytest.raises(ThresholdError):
        lp_membership_of_moment(ou, ou_small, (-1.0, 1.0), 5.0, 2.0)


def test_strong_markov_inequality(ou_gen):
    r = strong_markov_check(ou_gen, (-1.0, 1.0), 2.0, 0.8)
    # equality on |x| = R holds only up to the interpolated boundary value
    assert r["worst_relative_slack"] >= -1e-6
