"""Consistency-style distillation on sub-path approximations.

``mode`` selects what the online network sees for a sampled pair of
endpoints ``(z_t, z_hat_{t-k})``:

* ``SL`` - a point on the drift-shifted linear path, labelled with its
  path coordinate ``gamma ~ U[0, 1)``;
* ``DL`` - a point on the straight line between the endpoints, converted to
  a data estimate with that line's own marginal ``(alpha, sigma)``;
* ``ConsistencyBaseline`` - ``gamma`` pinned to 1, i.e. the plain
  skipping-step consistency pairing.

The target is always the EMA network evaluated at ``(z_hat_{t-k}, t-k)``
with ``gamma = 1``, and the teacher trajectory is never differentiated.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .data import LabeledBatch, Sampler
from .network import NetConfig, Params, copy_params, ema_update, f_generate, trainable
from .optim import AdamState, adam_step
from .schedule import NoiseSchedule, perturb
from .solver import EpsFn, multiple_estimation
from .subpath import dl_interpolate, sl_interpolate
from .teacher import lr_at

log = logging.getLogger(__name__)

MODES = ("SL", "DL", "ConsistencyBaseline")
METRICS = ("L2", "PseudoHuber")


class ConfigError(ValueError):
    pass


@dataclass
class DistillConfig:
    k: int = 100
    k_phi: int = 20
    w: float = 1.0
    mu: float = 0.95
    metric: str = "L2"
    mode: str = "SL"
    multiple_estimation: bool = True
    sigma: str = "empirical"
    t_sampling: str = "grid"
    iterations: int = 2000
    batch_size: int = 256
    lr: float = 1e-3
    lr_final: float | None = None
    clip_norm: float = 10.0
    log_every: int = 50

    def validate(self, T: int | None = None) -> "DistillConfig":
        if self.k < 1 or self.k_phi < 1:
            raise ConfigError("k and k_phi must be positive")
        if self.k < self.k_phi:
            raise ConfigError(f"k={self.k} must be >= k_phi={self.k_phi}")
        if self.k % self.k_phi:
            raise ConfigError(f"k={self.k} must be divisible by k_phi={self.k_phi}")
        if not (0.0 <= self.mu < 1.0):
            raise ConfigError(f"mu must be in [0, 1), got {self.mu}")
        if self.w < 0:
            raise ConfigError(f"guidance scale w must be >= 0, got {self.w}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.sigma not in ("empirical", "exact"):
            raise ConfigError(f"sigma must be 'empirical' or 'exact', got {self.sigma!r}")
        if self.t_sampling not in ("grid", "uniform"):
            raise ConfigError(f"t_sampling must be 'grid' or 'uniform', got {self.t_sampling!r}")
        if T is not None and self.k > T:
            raise ConfigError(f"k={self.k} exceeds T={T}")
        return self

    @property
    def solver_step(self) -> int:
        return self.k_phi if self.multiple_estimation else self.k

    def path(self) -> str:
        if self.mode == "DL":
            return "DL"
        return "SL-exact" if self.sigma == "exact" else "SL"

    def to_dict(self) -> dict:
        return asdict(self)


def t_grid(T: int, k: int, k_phi: int) -> np.ndarray:
    """Training timesteps ``{k, k+k_phi, ...} <= T``."""
    return np.arange(k, T + 1, k_phi)


def pseudo_huber_c(dim: int) -> float:
    return 0.00054 * np.sqrt(dim)


def metric_tensor(a: ad.Tensor, b: ad.Tensor, metric: str) -> ad.Tensor:
    diff = a - b
    sq = ad.mul(diff, diff)
    if metric == "L2":
        return ad.mean(sq)
    if metric == "PseudoHuber":
        c = pseudo_huber_c(a.shape[1])
        rows = ad.add_scalar(ad.sqrt(ad.add_scalar(ad.sum(sq, axis=1), c * c)), -c)
        return ad.mean(rows)
    raise ValueError(f"unknown metric {metric!r}")


def metric_eval(a, b, metric: str) -> float:
    """L2: mean of squared differences.  PseudoHuber: per-row ``sqrt(|d|^2+c^2)-c``, averaged."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    return float(metric_tensor(ad.Tensor(a), ad.Tensor(b), metric).data)


@dataclass
class StepDraws:
    t: np.ndarray
    gamma: np.ndarray
    eps: np.ndarray


def draw(rng: np.random.Generator, n: int, dim: int, cfg: DistillConfig, T: int) -> StepDraws:
    """Per-step randomness, consumed in the same order for every mode."""
    if cfg.t_sampling == "grid":
        grid = t_grid(T, cfg.k, cfg.k_phi)
        t = grid[rng.integers(0, len(grid), size=n)]
    else:
        t = rng.integers(cfg.k, T + 1, size=n)
    gamma = rng.random(n)
    eps = rng.standard_normal((n, dim))
    return StepDraws(t, gamma, eps)


def pair(teacher: EpsFn, batch: LabeledBatch, draws: StepDraws, cfg: DistillConfig, null_label: int,
         sched: NoiseSchedule):
    """Noised sample ``z_t`` and the teacher's estimate of ``z_{t-k}``."""
    z_t = perturb(batch.points, draws.t, draws.eps, sched)
    z_hat = multiple_estimation(teacher, z_t, draws.t, cfg.k, cfg.solver_step, batch.labels, cfg.w,
                                null_label, sched)
    return z_t, z_hat


def online_input(z_t, z_hat, gamma, t, cfg: DistillConfig, sched: NoiseSchedule) -> np.ndarray:
    if cfg.mode == "DL":
        return dl_interpolate(z_t, z_hat, gamma, t, cfg.k, sched).x_gamma_t
    return sl_interpolate(z_t, z_hat, gamma, t, cfg.k, sched).x_gamma_t


def slad_loss(net: NetConfig, theta: Params, theta_minus: Params, batch: LabeledBatch, draws: StepDraws,
              cfg: DistillConfig, sched: NoiseSchedule, teacher: EpsFn, tape: ad.Tape | None = None,
              gamma_override: float | None = None) -> ad.Tensor:
    gamma = draws.gamma
    if cfg.mode == "ConsistencyBaseline":
        gamma = np.ones_like(gamma)
    if gamma_override is not None:
        gamma = np.full_like(gamma, gamma_override)
    z_t, z_hat = pair(teacher, batch, draws, cfg, net.null_label, sched)
    z_g = online_input(z_t, z_hat, gamma, draws.t, cfg, sched)

    target = f_generate(net, theta_minus, z_hat, batch.labels, 1.0, draws.t - cfg.k, sched).data
    if tape is not None:
        p = tape.params({k: theta[k] for k in trainable(theta)})
        p.update({k: ad.Tensor(v) for k, v in theta.items() if k not in p})
    else:
        p = theta
    online = f_generate(net, p, z_g, batch.labels, gamma, draws.t, sched, cfg.k, cfg.path())
    return metric_tensor(online, ad.Tensor(target), cfg.metric)


def slad_step(net: NetConfig, theta: Params, theta_minus: Params, batch: LabeledBatch, cfg: DistillConfig,
              sched: NoiseSchedule, rng: np.random.Generator, teacher: EpsFn, state: AdamState,
              lr: float | None = None, gamma_override: float | None = None):
    """One iteration: loss, AdamW update of ``theta``, EMA update of ``theta_minus``.

    Returns ``(loss, grad_norm)``; both parameter dicts are updated in place.
    """
    draws = draw(rng, len(batch), net.dim, cfg, sched.T)
    tape = ad.Tape()
    loss = slad_loss(net, theta, theta_minus, batch, draws, cfg, sched, teacher, tape, gamma_override)
    value = float(loss.data)
    grads = ad.backward(loss)
    norm = adam_step(theta, grads, state, cfg.lr if lr is None else lr, cfg.clip_norm)
    ema_update(theta, theta_minus, cfg.mu)
    return value, norm


def dl_distill_step(net, theta, theta_minus, batch, cfg: DistillConfig, sched, rng, teacher, state, lr=None):
    """:func:`slad_step` on the direct-linking path."""
    if cfg.mode != "DL":
        cfg = DistillConfig(**{**cfg.to_dict(), "mode": "DL"})
    return slad_step(net, theta, theta_minus, batch, cfg, sched, rng, teacher, state, lr)


def distill(net: NetConfig, init: Params, teacher: EpsFn, data: Sampler, cfg: DistillConfig,
            sched: NoiseSchedule, seed: int,
            on_log: Callable[[int, Params], dict] | None = None):
    """Run ``cfg.iterations`` distillation steps from ``init``.

    Returns ``(theta, theta_minus, rows)``; each row is a dict with
    ``step``, ``loss``, ``lr``, ``grad_norm`` plus whatever ``on_log``
    reports for the EMA weights at that step.
    """
    cfg.validate(sched.T)
    theta = copy_params(init)
    theta_minus = copy_params(init)
    state = AdamState()
    rng = np.random.default_rng([seed, 2])
    rows = []
    for step in range(cfg.iterations):
        batch = data.batch(step, cfg.batch_size)
        lr = lr_at(step, cfg.iterations, cfg.lr, cfg.lr_final)
        try:
            loss, norm = slad_step(net, theta, theta_minus, batch, cfg, sched, rng, teacher, state, lr)
        except FloatingPointError as exc:
            raise FloatingPointError(f"distillation step {step} failed (lr={lr:g}): {exc}") from exc
        if cfg.log_every and (step % cfg.log_every == 0 or step == cfg.iterations - 1):
            row = {"step": step, "loss": loss, "lr": float(lr), "grad_norm": norm}
            if on_log is not None:
                row.update(on_log(step, theta_minus))
            rows.append(row)
            log.debug("distill step %d loss %.6f", step, loss)
    return theta, theta_minus, rows


def consistency_fn(net: NetConfig, params: Params, sched: NoiseSchedule):
    """Inference-only ``F(z, labels, gamma, t)`` over fixed weights."""
    frozen = {k: ad.Tensor(v) for k, v in params.items()}

    def fn(z, labels, gamma, t):
        return f_generate(net, frozen, z, labels, gamma, t, sched).data

    return fn
