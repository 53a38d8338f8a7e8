"""Deterministic DDIM updates, guidance mixing and few-step sampling.

An *eps function* has the signature ``eps_fn(z, labels, gamma, t) -> array``
and returns the predicted noise for a batch ``z``.  Timesteps may be a
single integer or one integer per row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .schedule import NoiseSchedule

EpsFn = Callable[[np.ndarray, np.ndarray, float, np.ndarray], np.ndarray]


def _col(v, z):
    v = np.asarray(v, dtype=np.float64)
    return v[:, None] if v.ndim == 1 else v


def ddim_step(eps_fn: EpsFn, z, from_t, to_t, labels, sched: NoiseSchedule) -> np.ndarray:
    """One eta=0 DDIM move from ``from_t`` down to ``to_t``."""
    from_t, to_t = np.asarray(from_t), np.asarray(to_t)
    if (to_t >= from_t).any() or (to_t < 0).any() or (from_t > sched.T).any():
        raise ValueError(f"need 0 <= to_t < from_t <= T, got from_t={from_t}, to_t={to_t}")
    eps = np.asarray(eps_fn(z, labels, 1.0, from_t))
    a_from, s_from = _col(sched.alpha[from_t], z), _col(sched.sigma[from_t], z)
    a_to, s_to = _col(sched.alpha[to_t], z), _col(sched.sigma[to_t], z)
    x0 = (z - s_from * eps) / a_from
    return a_to * x0 + s_to * eps


def phi(eps_fn: EpsFn, z, from_t, to_t, labels, sched: NoiseSchedule) -> np.ndarray:
    """Solver increment: the DDIM update minus its starting point."""
    return ddim_step(eps_fn, z, from_t, to_t, labels, sched) - z


def cfg_phi(eps_fn: EpsFn, z, from_t, to_t, labels, w: float, null_label: int,
            sched: NoiseSchedule) -> np.ndarray:
    """Guided increment ``w*Phi(z|c) + (1-w)*Phi(z|null)``."""
    cond = phi(eps_fn, z, from_t, to_t, labels, sched)
    null = np.full(np.shape(z)[0], null_label)
    uncond = phi(eps_fn, z, from_t, to_t, null, sched)
    return w * cond + (1.0 - w) * uncond


def multiple_estimation(eps_fn: EpsFn, z_t, t, k: int, k_phi: int, labels, w: float,
                        null_label: int, sched: NoiseSchedule) -> np.ndarray:
    """Estimate ``z_{t-k}`` with ``k // k_phi`` guided DDIM sub-steps of size ``k_phi``."""
    if k_phi <= 0 or k % k_phi:
        raise ValueError(f"k={k} must be a positive multiple of k_phi={k_phi}")
    t = np.asarray(t)
    if (t < k).any():
        raise ValueError(f"t must be >= k={k}")
    z = np.asarray(z_t, dtype=np.float64)
    for i in range(k // k_phi):
        z = z + cfg_phi(eps_fn, z, t - i * k_phi, t - (i + 1) * k_phi, labels, w, null_label, sched)
    return z


def ddim_integrate(eps_fn: EpsFn, z, times, labels, sched: NoiseSchedule) -> np.ndarray:
    """Chain DDIM steps along a strictly decreasing list of times."""
    for a, b in zip(times[:-1], times[1:]):
        z = ddim_step(eps_fn, z, a, b, labels, sched)
    return z


def ddim_grid(T: int, n_steps: int, end: int = 0) -> np.ndarray:
    """``n_steps + 1`` integer times from ``T`` down to ``end`` (rounded, de-duplicated)."""
    grid = np.round(np.linspace(T, end, n_steps + 1)).astype(np.int64)
    return np.unique(grid)[::-1]


def ddim_sample(eps_fn: EpsFn, z_T, n_steps: int, labels, sched: NoiseSchedule) -> np.ndarray:
    return ddim_integrate(eps_fn, z_T, ddim_grid(sched.T, n_steps), labels, sched)


def reference_times(T: int, start: int, stop: int, n_steps: int = 400) -> np.ndarray:
    """Points of the ``n_steps`` global DDIM grid lying in ``[stop, start]``."""
    grid = ddim_grid(T, n_steps)
    inside = grid[(grid <= start) & (grid >= stop)]
    if inside[0] != start or inside[-1] != stop:
        raise ValueError(f"{start} and {stop} must both be on the {n_steps}-step grid")
    return inside


def sampling_grid(T: int, n_steps: int, kind: str = "even", align: int = 1) -> list[int]:
    """Descending timesteps for few-step sampling.

    ``even`` gives ``floor(T*(n-i)/n)`` for ``i < n``.  ``aligned`` snaps
    those points down to multiples of ``align``.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    grid = [(T * (n_steps - i)) // n_steps for i in range(n_steps)]
    if kind == "aligned":
        grid = [max(align, (g // align) * align) for g in grid]
    elif kind != "even":
        raise ValueError(f"unknown grid kind {kind!r}")
    return grid


def multistep_sample(F_fn, n_steps: int, labels, sched: NoiseSchedule, rng: np.random.Generator,
                     count: int, dim: int, grid: list[int] | None = None) -> np.ndarray:
    """Few-step sampling with a consistency function ``F_fn(z, labels, gamma, t)``.

    Each step maps the current state to a data estimate; between steps the
    estimate is pushed back to the next grid time with fresh noise.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    grid = sampling_grid(sched.T, n_steps) if grid is None else list(grid)
    z = rng.standard_normal((count, dim))
    x0 = None
    for i, t in enumerate(grid):
        x0 = np.asarray(F_fn(z, labels, 1.0, t))
        if i + 1 < len(grid):
            nxt = grid[i + 1]
            z = sched.alpha[nxt] * x0 + sched.sigma[nxt] * rng.standard_normal(x0.shape)
    return x0


@dataclass(frozen=True)
class AnalyticTeacher:
    """Exact noise predictor for isotropic Gaussian data ``N(mean, scale^2 I)``."""

    mean: np.ndarray
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def eps_fn(self, sched: NoiseSchedule) -> EpsFn:
        def fn(z, labels, gamma, t):
            return analytic_eps(self, z, t, sched)
        return fn

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return np.asarray(self.mean) + self.scale * rng.standard_normal((count, np.size(self.mean)))


def analytic_eps(teacher: AnalyticTeacher, z, t, sched: NoiseSchedule) -> np.ndarray:
    """``E[eps | z_t]`` under the Gaussian data model."""
    z = np.asarray(z, dtype=np.float64)
    t = np.asarray(t)
    a, s = _col(sched.alpha[t], z), _col(sched.sigma[t], z)
    return s * (z - a * np.asarray(teacher.mean)) / (a**2 * teacher.scale**2 + s**2)


class CountingEps:
    """Wraps an eps function and counts calls (used by diagnostics and tests)."""

    def __init__(self, fn: EpsFn):
        self.fn = fn
        self.calls = 0

    def __call__(self, z, labels, gamma, t):
        self.calls += 1
        return self.fn(z, labels, gamma, t)
