"""Points on sub-path approximations between two trajectory endpoints.

Two constructions are provided for the segment between ``x_{t-k}`` and
``x_t``:

* the sub-path linear (SL) path, which first applies the drift factor
  ``alpha[t]/alpha[t-k]`` to the earlier endpoint and then interpolates, and
* the direct-linking (DL) path, a plain straight line between the endpoints.

Everything here takes scalar or per-row ``gamma``/``t`` arrays; per-row
values broadcast over the trailing feature dimension.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .schedule import NoiseSchedule


class PathMode(str, Enum):
    SL = "SL"
    DL = "DL"


@dataclass
class SubPathSample:
    x_gamma_t: np.ndarray
    gamma: np.ndarray | float
    t: np.ndarray | int
    k: int
    mode: PathMode


def _col(v, x: np.ndarray):
    """Broadcast a scalar or per-row coefficient against ``x``."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1 and x.ndim == 2:
        return v[:, None]
    return v


def _check(gamma, t, k, sched: NoiseSchedule):
    g = np.asarray(gamma)
    if (g < 0).any() or (g > 1).any():
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    tt = np.asarray(t)
    if k < 0 or (tt < k).any() or (tt > sched.T).any():
        raise ValueError(f"need 0 <= k <= t <= T, got t={t}, k={k}, T={sched.T}")


def sl_interpolate(x_t, x_tmk, gamma, t, k: int, sched: NoiseSchedule) -> SubPathSample:
    x_t = np.asarray(x_t, dtype=np.float64)
    x_tmk = np.asarray(x_tmk, dtype=np.float64)
    if x_t.shape != x_tmk.shape:
        raise ValueError(f"endpoint shapes differ: {x_t.shape} vs {x_tmk.shape}")
    _check(gamma, t, k, sched)
    r = _col(sched.ratio(t, k), x_t)
    g = _col(gamma, x_t)
    # Convex form keeps both endpoints bit-exact: 0*a + b == b.
    x = (1.0 - g) * (r * x_tmk) + g * x_t
    return SubPathSample(x, gamma, t, k, PathMode.SL)


def dl_interpolate(x_t, x_tmk, gamma, t, k: int, sched: NoiseSchedule) -> SubPathSample:
    x_t = np.asarray(x_t, dtype=np.float64)
    x_tmk = np.asarray(x_tmk, dtype=np.float64)
    if x_t.shape != x_tmk.shape:
        raise ValueError(f"endpoint shapes differ: {x_t.shape} vs {x_tmk.shape}")
    _check(gamma, t, k, sched)
    g = _col(gamma, x_t)
    # Same line as x_tmk + g*(x_t - x_tmk), written so the endpoints are exact.
    x = (1.0 - g) * x_tmk + g * x_t
    return SubPathSample(x, gamma, t, k, PathMode.DL)


def sigma_gamma_empirical(gamma, t, k: int, sched: NoiseSchedule):
    """Convex blend of the two endpoint noise levels (used in training)."""
    g = np.asarray(gamma, dtype=np.float64)
    t = np.asarray(t)
    return (1.0 - g) * sched.ratio(t, k) * sched.sigma[t - k] + g * sched.sigma[t]


def sigma_gamma_exact(gamma, t, k: int, sched: NoiseSchedule):
    """Standard deviation of the true marginal of an SL point given ``x0``.

    The mean coefficient of that marginal is exactly ``alpha[t]``.
    """
    g = np.asarray(gamma, dtype=np.float64)
    t = np.asarray(t)
    r2 = sched.ratio(t, k) ** 2
    return np.sqrt(r2 * sched.sigma[t - k] ** 2 + g**2 * (1.0 - r2))


def sigma_error_closed_form(gamma, t, k: int, sched: NoiseSchedule):
    g = np.asarray(gamma, dtype=np.float64)
    t = np.asarray(t)
    a_t, a_tmk = sched.alpha[t], sched.alpha[t - k]
    r = a_t / a_tmk
    return (
        2.0 * g * (1.0 - g) * r * sched.sigma[t - k]
        * (np.sqrt(a_t**2 / a_tmk**2 - a_t**2) - np.sqrt(1.0 - a_t**2))
    )


def sigma_error_surface(t: int, k: int, sched: NoiseSchedule, gamma_grid) -> np.ndarray:
    """Squared-sigma gap between the exact and the blended noise level.

    Evaluated from the factored closed form; see
    :func:`sigma_error_direct` for the plain subtraction.
    """
    _check(0.0, t, k, sched)
    return sigma_error_closed_form(np.asarray(gamma_grid, dtype=np.float64), t, k, sched)


def sigma_error_direct(t: int, k: int, sched: NoiseSchedule, gamma_grid) -> np.ndarray:
    g = np.asarray(gamma_grid, dtype=np.float64)
    return sigma_gamma_exact(g, t, k, sched) ** 2 - sigma_gamma_empirical(g, t, k, sched) ** 2


def dl_schedule(gamma, t, k: int, sched: NoiseSchedule):
    """Marginal ``(alpha, sigma)`` of a point on the direct-linking path."""
    g = np.asarray(gamma, dtype=np.float64)
    t = np.asarray(t)
    a_t, a_tmk = sched.alpha[t], sched.alpha[t - k]
    r = a_t / a_tmk
    alpha_dl = g * a_t + (1.0 - g) * a_tmk
    var = (1.0 - g + r * g) ** 2 * sched.sigma[t - k] ** 2 + g**2 * (1.0 - r**2)
    return alpha_dl, np.sqrt(var)


def dist_delta(x_t, x_tmk, t, k: int, sched: NoiseSchedule) -> np.ndarray:
    """Increment from the drift-shifted earlier endpoint to ``x_t``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    return x_t - _col(sched.ratio(t, k), x_t) * np.asarray(x_tmk, dtype=np.float64)


def dist_zero(eps_pred_tmk, t, k: int, sched: NoiseSchedule) -> np.ndarray:
    """Denoising contribution of the earlier endpoint carried forward to ``t``."""
    e = np.asarray(eps_pred_tmk, dtype=np.float64)
    t = np.asarray(t)
    return _col(sched.ratio(t, k) * sched.sigma[t - k], e) * e
