"""Discrete variance-preserving noise schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear-beta DDPM chain with ``alpha[t]**2 + sigma[t]**2 == 1``.

    ``alpha`` and ``sigma`` are indexed by the integer timestep ``0..T``;
    ``beta[0]`` is a zero placeholder so that ``beta[t]`` is the variance of
    step ``t``.
    """

    T: int
    beta_start: float
    beta_end: float
    beta: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)

    def params(self) -> dict:
        return {"T": self.T, "beta_start": self.beta_start, "beta_end": self.beta_end}

    def ratio(self, t, k):
        """``alpha[t] / alpha[t - k]``, the drift factor across ``k`` steps."""
        t = np.asarray(t)
        return self.alpha[t] / self.alpha[t - k]


def make_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if int(T) != T or T < 2:
        raise ValueError(f"T must be an integer >= 2, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    T = int(T)
    beta = np.zeros(T + 1)
    beta[1:] = np.linspace(beta_start, beta_end, T)
    alpha = np.ones(T + 1)
    alpha[1:] = np.cumprod(np.sqrt(1.0 - beta[1:]))
    sigma = np.sqrt(1.0 - alpha**2)
    for arr in (beta, alpha, sigma):
        arr.setflags(write=False)
    return NoiseSchedule(T, float(beta_start), float(beta_end), beta, alpha, sigma)


def perturb(x0: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Sample of the marginal ``N(alpha[t] x0, sigma[t]^2 I)`` given the noise ``eps``.

    ``t`` is a scalar or one timestep per row of ``x0``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"perturb: x0 shape {x0.shape} != eps shape {eps.shape}")
    t = np.asarray(t)
    if (t < 0).any() or (t > sched.T).any():
        raise ValueError(f"perturb: t out of range [0, {sched.T}]")
    a, s = sched.alpha[t], sched.sigma[t]
    if t.ndim == 1:
        a, s = a[:, None], s[:, None]
    return a * x0 + s * eps
