import math

import numpy as np
import pytest

from ergolab.fenchel import fenchel_dual, fenchel_dual_inverse, logplus_power


def test_beta_one_dual_is_exponential():
    # G(u) = u ln+ u  ->  G*(t) = e^{t-1} for t >= 1
    fs = logplus_power(1.0)
    t = np.linspace(1.0, 12.0, 23)
    np.testing.assert_allclose(fenchel_dual(fs, t), np.exp(t - 1), rtol=1e-12)


def test_dual_below_one_is_linear_part():
    # for t <= 1 the supremum is attained at u = 1 (G vanishes on [0, 1])
    fs = logplus_power(1.0)
    assert fenchel_dual(fs, 0.5) == pytest.approx(0.5, rel=1e-12)


def test_young_inequality_holds(rng):
    fs = logplus_power(2.0)
    u = np.exp(rng.uniform(-2, 6, 200))
    t = rng.uniform(0, 8, 200)
    assert np.all(t * u <= fs.G(u) + fenchel_dual(fs, t) + 1e-9 * (1 + t * u))


def test_beta_two_closed_form():
    # G(u) = u ln^2 u: stationarity gives ln u = s - 1 with s = sqrt(1 + t),
    # hence G*(t) = 2 (s - 1) e^{s - 1}
    fs = logplus_power(2.0)
    t = np.array([0.5, 3.0, 25.0, 400.0, 6400.0])
    s = np.sqrt(1 + t)
    np.testing.assert_allclose(fenchel_dual(fs, t), 2 * (s - 1) * np.exp(s - 1), rtol=1e-11)


def test_inverse_round_trip():
    fs = logplus_power(1.0)
    assert fenchel_dual_inverse(fs, math.e) == pytest.approx(2.0, rel=1e-10)
    for y in (3.0, 50.0, 1e4):
        t = fenchel_dual_inverse(fs, y)
        assert fenchel_dual(fs, t) == pytest.approx(y, rel=1e-9)


def test_negative_argument_rejected():
    with pytest.raises(ValueError):
        fenchel_dual(logplus_power(1.0), -1.0)
