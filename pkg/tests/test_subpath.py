import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slad.schedule import make_schedule
from slad.subpath import (PathMode, dist_delta, dl_interpolate, dl_schedule, sigma_error_direct,
                          sigma_error_surface, sigma_gamma_empirical, sigma_gamma_exact, sl_interpolate)

S = make_schedule()
GRID = np.linspace(0.0, 1.0, 101)


def test_sl_hand_example():
    t, k = 500, 100
    r = S.alpha[t] / S.alpha[t - k]
    out = sl_interpolate(np.array([4.0]), np.array([2.0]), 0.5, t, k, S)
    assert out.x_gamma_t[0] == pytest.approx(0.5 * r * 2 + 2, abs=1e-15)
    assert out.mode is PathMode.SL


def test_dl_hand_example():
    out = dl_interpolate(np.array([8.0]), np.array([0.0]), 0.25, 300, 20, S)
    assert out.x_gamma_t[0] == 2.0
    assert out.mode is PathMode.DL


def test_endpoints_exact():
    rng = np.random.default_rng(0)
    x_t, x_tmk = rng.standard_normal((2, 5, 3))
    t, k = 731, 100
    r = S.alpha[t] / S.alpha[t - k]
    assert np.array_equal(sl_interpolate(x_t, x_tmk, 1.0, t, k, S).x_gamma_t, x_t)
    assert np.array_equal(sl_interpolate(x_t, x_tmk, 0.0, t, k, S).x_gamma_t, r * x_tmk)
    assert np.array_equal(dl_interpolate(x_t, x_tmk, 1.0, t, k, S).x_gamma_t, x_t)
    assert np.array_equal(dl_interpolate(x_t, x_tmk, 0.0, t, k, S).x_gamma_t, x_tmk)


def test_invalid_arguments():
    x = np.zeros((2, 2))
    with pytest.raises(ValueError):
        sl_interpolate(x, x, 1.5, 500, 20, S)
    with pytest.raises(ValueError):
        sl_interpolate(x, x, 0.5, 10, 20, S)
    with pytest.raises(ValueError):
        dl_interpolate(x, np.zeros((2, 3)), 0.5, 500, 20, S)


def test_sigma_endpoints():
    for t, k in [(20, 20), (500, 100), (1000, 100)]:
        r = S.alpha[t] / S.alpha[t - k]
        assert sigma_gamma_empirical(1.0, t, k, S) == pytest.approx(S.sigma[t], abs=1e-12)
        assert sigma_gamma_exact(1.0, t, k, S) == pytest.approx(S.sigma[t], abs=1e-12)
        assert sigma_gamma_exact(0.0, t, k, S) == pytest.approx(r * S.sigma[t - k], abs=1e-12)
        assert sigma_gamma_empirical(0.0, t, k, S) == pytest.approx(r * S.sigma[t - k], abs=1e-12)


def test_sigma_empirical_midpoint():
    mid = sigma_gamma_empirical(0.5, 500, 100, S)
    ends = sigma_gamma_empirical(np.array([0.0, 1.0]), 500, 100, S)
    assert mid == pytest.approx(ends.mean(), abs=1e-15)


def test_sigma_exact_from_t_equals_k():
    # alpha[0] = 1 so the earlier endpoint is noise-free and only the gamma term remains.
    t = k = 100
    for g in (0.0, 0.3, 1.0):
        assert sigma_gamma_exact(g, t, k, S) == pytest.approx(g * np.sqrt(1 - S.alpha[t] ** 2), abs=1e-14)


def test_closed_form_matches_subtraction():
    for k in (20, 100):
        for t in range(k, S.T + 1):
            e = sigma_error_surface(t, k, S, GRID)
            assert abs(e[0]) < 1e-12 and abs(e[-1]) < 1e-12
            assert np.max(np.abs(e - sigma_error_direct(t, k, S, GRID))) < 1e-10


def test_error_surface_mpmath_point():
    mp.mp.dps = 30
    t, k, g = 640, 100, 0.37
    a_t, a_tmk = mp.mpf(S.alpha[t]), mp.mpf(S.alpha[t - k])
    r = a_t / a_tmk
    s_tmk = mp.sqrt(1 - a_tmk**2)
    exact2 = r**2 * s_tmk**2 + g**2 * (1 - r**2)
    emp = (1 - g) * r * s_tmk + g * mp.sqrt(1 - a_t**2)
    assert float(sigma_error_surface(t, k, S, [g])[0]) == pytest.approx(float(exact2 - emp**2), abs=1e-14)


@given(st.integers(1, 1000), st.integers(1, 1000), st.floats(0.0, 1.0))
def test_empirical_sigma_never_below_exact(t, k, g):
    t = max(t, k)
    assert sigma_error_surface(t, k, S, [g])[0] <= 1e-15


def test_error_grows_with_step_at_fixed_t():
    small = np.max(np.abs(sigma_error_surface(500, 20, S, GRID)))
    large = np.max(np.abs(sigma_error_surface(500, 100, S, GRID)))
    assert large > small > 0


def test_dl_schedule_hand_values():
    t, k, g = 500, 100, 0.5
    a_t, a_tmk = S.alpha[t], S.alpha[t - k]
    s_tmk = np.sqrt(1 - a_tmk**2)
    r = a_t / a_tmk
    a_dl, s_dl = dl_schedule(g, t, k, S)
    assert a_dl == pytest.approx(0.5 * (a_t + a_tmk), abs=1e-15)
    assert s_dl**2 == pytest.approx((0.5 + 0.5 * r) ** 2 * s_tmk**2 + 0.25 * (1 - r * r), abs=1e-14)


def test_dl_schedule_endpoints():
    t, k = 800, 100
    assert np.allclose(dl_schedule(0.0, t, k, S), (S.alpha[t - k], S.sigma[t - k]), atol=1e-14)
    assert np.allclose(dl_schedule(1.0, t, k, S), (S.alpha[t], S.sigma[t]), atol=1e-14)


def test_dl_marginal_matches_schedule():
    rng = np.random.default_rng(3)
    n, t, k, g = 200_000, 600, 100, 0.4
    x0 = 1.5
    r = S.alpha[t] / S.alpha[t - k]
    x_tmk = S.alpha[t - k] * x0 + S.sigma[t - k] * rng.standard_normal(n)
    x_t = r * x_tmk + np.sqrt(1 - r * r) * rng.standard_normal(n)
    x = dl_interpolate(x_t, x_tmk, g, t, k, S).x_gamma_t
    a_dl, s_dl = dl_schedule(g, t, k, S)
    assert abs(x.mean() - a_dl * x0) < 3 * s_dl / np.sqrt(n)
    assert x.var() == pytest.approx(s_dl**2, rel=0.02)


def test_sl_point_minus_shifted_endpoint_is_scaled_increment():
    rng = np.random.default_rng(4)
    x_t, x_tmk = rng.standard_normal((2, 50, 2))
    t = rng.integers(100, 1001, size=50)
    g = rng.random(50)
    r = (S.alpha[t] / S.alpha[t - 100])[:, None]
    lhs = sl_interpolate(x_t, x_tmk, g, t, 100, S).x_gamma_t - r * x_tmk
    assert np.allclose(lhs, g[:, None] * dist_delta(x_t, x_tmk, t, 100, S), atol=1e-14)
