"""Noise-matching training of the teacher network."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .data import Sampler
from .network import NetConfig, Params, eps_predict, init_params, trainable
from .optim import AdamState, adam_step
from .schedule import NoiseSchedule, perturb

log = logging.getLogger(__name__)


@dataclass
class TeacherConfig:
    steps: int = 6000
    batch_size: int = 256
    lr: float = 1e-3
    lr_final: float = 1e-4
    clip_norm: float = 10.0
    null_label_prob: float = 0.1
    log_every: int = 100
    checkpoint_every: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def eps_fn_of(cfg: NetConfig, params: Params):
    """Inference-only eps function over a parameter dict."""
    frozen = {k: ad.Tensor(v) for k, v in params.items()}

    def fn(z, labels, gamma, t):
        return eps_predict(cfg, frozen, z, labels, gamma, t).data

    return fn


def lr_at(step: int, total: int, lr: float, lr_final: float | None) -> float:
    """Cosine decay from ``lr`` to ``lr_final`` (constant when ``lr_final`` is None)."""
    if lr_final is None or total <= 1:
        return lr
    frac = min(step / (total - 1), 1.0)
    return lr_final + 0.5 * (lr - lr_final) * (1.0 + np.cos(np.pi * frac))


def teacher_loss(net: NetConfig, params: Params, x0, labels, t, eps, sched: NoiseSchedule,
                 tape: ad.Tape | None = None) -> ad.Tensor:
    p = tape.params({k: params[k] for k in trainable(params)}) if tape is not None else dict(params)
    if tape is not None:
        p.update({k: ad.Tensor(params[k]) for k in params if k not in p})
    z = perturb(x0, t, eps, sched)
    pred = eps_predict(net, p, z, labels, 1.0, t)
    diff = pred - ad.Tensor(eps)
    return ad.mean(ad.mul(diff, diff))


def train_teacher(net: NetConfig, data: Sampler, sched: NoiseSchedule, cfg: TeacherConfig, seed: int,
                  params: Params | None = None,
                  on_checkpoint: Callable[[int, Params], None] | None = None):
    """Fit ``eps_theta`` by regressing the injected noise.

    Returns ``(params, log_rows)`` with one ``(step, loss, lr, grad_norm)``
    row every ``cfg.log_every`` steps.
    """
    rng = np.random.default_rng([seed, 1])
    params = init_params(net, seed) if params is None else params
    state = AdamState()
    rows = []
    for step in range(cfg.steps):
        batch = data.batch(step, cfg.batch_size)
        n = len(batch)
        t = rng.integers(1, sched.T + 1, size=n)
        eps = rng.standard_normal(batch.points.shape)
        labels = np.where(rng.random(n) < cfg.null_label_prob, net.null_label, batch.labels)

        lr = lr_at(step, cfg.steps, cfg.lr, cfg.lr_final)
        try:
            tape = ad.Tape()
            loss = teacher_loss(net, params, batch.points, labels, t, eps, sched, tape)
            value = float(loss.data)
            if not np.isfinite(value):
                raise FloatingPointError("loss is non-finite")
            grads = ad.backward(loss)
            norm = adam_step(params, grads, state, lr, cfg.clip_norm)
        except FloatingPointError as exc:
            raise FloatingPointError(f"teacher step {step} failed (lr={lr:g}): {exc}") from exc
        if cfg.log_every and (step % cfg.log_every == 0 or step == cfg.steps - 1):
            rows.append((step, value, lr, norm))
            log.debug("teacher step %d loss %.5f", step, value)
        if on_checkpoint and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            on_checkpoint(step + 1, params)
    return params, rows
