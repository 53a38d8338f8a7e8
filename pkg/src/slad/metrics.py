"""Sample-quality and approximation-error measurements."""

from __future__ import annotations

import numpy as np

from .data import Sampler
from .schedule import NoiseSchedule

_BLOCK = 1024


def _mean_pairwise(X: np.ndarray, Y: np.ndarray, exclude_diagonal: bool = False) -> float:
    """Mean Euclidean distance over all (x, y) pairs, summed block by block in a fixed order."""
    total = 0.0
    for i in range(0, len(X), _BLOCK):
        xb = X[i:i + _BLOCK]
        for j in range(0, len(Y), _BLOCK):
            d = np.sqrt(((xb[:, None, :] - Y[None, j:j + _BLOCK, :]) ** 2).sum(-1))
            total += float(d.sum())
    n_pairs = len(X) * len(Y)
    if exclude_diagonal:
        n_pairs -= len(X)
    return total / n_pairs


def energy_distance(X, Y, statistic: str = "u") -> float:
    """``2 E|x-y| - E|x-x'| - E|y-y'|``.

    ``statistic="u"`` drops the zero self-pairs from the within-sample terms
    (unbiased); ``"v"`` keeps them, which makes the value non-negative.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape} vs {Y.shape}")
    if statistic not in ("u", "v"):
        raise ValueError("statistic must be 'u' or 'v'")
    # Canonical argument order makes the result bit-symmetric.
    if (X.shape, X.tobytes()) > (Y.shape, Y.tobytes()):
        X, Y = Y, X
    unbiased = statistic == "u"
    if unbiased and (len(X) < 2 or len(Y) < 2):
        raise ValueError("the U-statistic needs at least two points per sample")
    xy = _mean_pairwise(X, Y)
    xx = _mean_pairwise(X, X, exclude_diagonal=unbiased)
    yy = _mean_pairwise(Y, Y, exclude_diagonal=unbiased)
    return 2.0 * xy - xx - yy


def mode_coverage(X, centers, threshold: float = 0.02):
    """Nearest-center assignment; a mode counts as covered above ``threshold`` of the samples.

    Returns ``(n_covered, histogram)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    d = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    hist = np.bincount(d.argmin(axis=1), minlength=len(centers))
    covered = int((hist >= threshold * len(X)).sum())
    return covered, hist


def delta_error(F_fn, data: Sampler, k: int, sched: NoiseSchedule, n_samples: int = 1000,
                t_min: int = 100, seed: int = 0, noise: str = "shared", batch_index: int = 10**6):
    """Mean distance between the mappings of two nearby noisy versions of the same data point.

    For each grid time ``t`` (``T, T-k, ...`` down to ``t_min``) the points
    ``x_t`` and ``x_{t-k}`` are built from one clean sample.  ``noise="shared"``
    reuses one noise draw at both times; ``"chained"`` runs the forward
    Markov chain from ``t-k`` to ``t``.  Returns a list of ``(t, delta)``.
    """
    if t_min >= sched.T:
        raise ValueError(f"t_min={t_min} leaves no timesteps below T={sched.T}")
    if noise not in ("shared", "chained"):
        raise ValueError("noise must be 'shared' or 'chained'")
    step = k if k > 0 else 1
    times = [t for t in range(sched.T, t_min - 1, -step) if t - k >= 0]
    if not times:
        raise ValueError("empty timestep grid")
    rng = np.random.default_rng([seed, 3])
    batch = data.batch(batch_index, n_samples)
    x0, labels = batch.points, batch.labels
    out = []
    for t in times:
        eps = rng.standard_normal(x0.shape)
        a_lo, s_lo = sched.alpha[t - k], sched.sigma[t - k]
        x_lo = a_lo * x0 + s_lo * eps
        if noise == "shared":
            x_hi = sched.alpha[t] * x0 + sched.sigma[t] * eps
        else:
            r = sched.alpha[t] / a_lo
            x_hi = r * x_lo + np.sqrt(1.0 - r * r) * rng.standard_normal(x0.shape)
        f_hi = np.asarray(F_fn(x_hi, labels, 1.0, t))
        f_lo = np.asarray(F_fn(x_lo, labels, 1.0, t - k))
        out.append((t, float(np.linalg.norm(f_hi - f_lo, axis=1).mean())))
    return out
