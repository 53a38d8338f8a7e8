import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slad.schedule import make_schedule, perturb

# Product of sqrt(1 - beta) over the default 1000-step linear schedule,
# evaluated with 40-digit mpmath arithmetic.
ALPHA_T_DEFAULT = 0.0063528180875700221


def test_default_terminal_alpha_is_pinned():
    s = make_schedule()
    assert s.alpha[1000] == pytest.approx(ALPHA_T_DEFAULT, rel=1e-13)


def test_endpoints_and_monotonicity():
    s = make_schedule()
    assert s.alpha[0] == 1.0 and s.sigma[0] == 0.0
    assert np.all(np.diff(s.alpha) < 0)
    assert np.all((s.beta[1:] > 0) & (s.beta[1:] < 1))
    assert np.max(np.abs(s.alpha**2 + s.sigma**2 - 1.0)) < 1e-12


def test_two_step_hand_product():
    s = make_schedule(2, 0.5, 0.5)
    assert s.alpha[2] == pytest.approx(0.5, abs=1e-15)
    assert s.sigma[2] == pytest.approx(np.sqrt(0.75), abs=1e-15)


def test_beta_is_linear():
    s = make_schedule(5, 0.1, 0.5)
    assert np.allclose(s.beta[1:], [0.1, 0.2, 0.3, 0.4, 0.5])


@pytest.mark.parametrize("args", [(1, 1e-4, 0.02), (1000, 0.0, 0.02), (1000, 0.03, 0.02), (1000, 1e-4, 1.0)])
def test_invalid_parameters(args):
    with pytest.raises(ValueError):
        make_schedule(*args)


def test_schedule_is_read_only():
    s = make_schedule()
    with pytest.raises(ValueError):
        s.alpha[3] = 0.0


@given(st.integers(2, 3000), st.floats(1e-6, 0.05), st.floats(0.0, 0.9))
def test_vp_identity_holds_for_any_linear_schedule(T, b0, spread):
    s = make_schedule(T, b0, min(b0 + spread, 0.99))
    assert np.max(np.abs(s.alpha**2 + s.sigma**2 - 1.0)) < 1e-12


def test_perturb_examples():
    s = make_schedule()
    x0 = np.array([[1.0, -2.0]])
    assert np.array_equal(perturb(x0, 0, np.array([[5.0, 5.0]]), s), x0)
    t = int(np.argmin(np.abs(s.alpha - 0.6)))
    out = perturb(np.array([[1.0, 0.0]]), t, np.array([[0.0, 1.0]]), s)
    assert np.allclose(out, [[s.alpha[t], s.sigma[t]]])
    with pytest.raises(ValueError):
        perturb(np.zeros((2, 2)), 5, np.zeros((2, 3)), s)


def test_perturb_per_row_times():
    s = make_schedule()
    x0 = np.ones((3, 2))
    eps = np.zeros((3, 2))
    out = perturb(x0, np.array([0, 10, 1000]), eps, s)
    assert np.allclose(out[:, 0], s.alpha[[0, 10, 1000]])


def test_perturb_marginal_statistics():
    s = make_schedule()
    rng = np.random.default_rng(0)
    n, t = 100_000, 400
    x0 = np.tile([0.7, -1.3], (n, 1))
    z = perturb(x0, t, rng.standard_normal((n, 2)), s)
    se = s.sigma[t] / np.sqrt(n)
    assert np.all(np.abs(z.mean(0) - s.alpha[t] * x0[0]) < 3 * se)
    assert np.allclose(z.std(0), s.sigma[t], rtol=0.01)
    assert abs(np.cov(z.T)[0, 1]) < 3 * s.sigma[t] ** 2 * np.sqrt(2.0 / n)
