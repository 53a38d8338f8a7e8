"""AdamW with global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Values used for the full-size runs; the toy runs default to a larger lr.
FULL_SCALE_LR = 8e-6
FULL_SCALE_CLIP_NORM = 10.0
FULL_SCALE_EMA_DECAY = 0.95


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: dict[str, np.ndarray], clip_norm: float | None):
    """Rescale all gradients by one factor so their joint L2 norm is at most ``clip_norm``."""
    norm = global_norm(grads)
    if clip_norm is None or norm <= clip_norm:
        return grads, norm
    factor = clip_norm / norm
    return {k: g * factor for k, g in grads.items()}, norm


def adam_step(params, grads, state: AdamState, lr: float, clip_norm: float | None = FULL_SCALE_CLIP_NORM,
              betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0) -> float:
    """Update ``params`` in place; returns the pre-clip gradient norm.

    Only names present in ``grads`` are touched.
    """
    for g in grads.values():
        if not np.isfinite(g).all():
            raise FloatingPointError("non-finite gradient")
    grads, norm = clip_by_global_norm(grads, clip_norm)
    b1, b2 = betas
    state.step += 1
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p = params[name]
        if weight_decay:
            p -= lr * weight_decay * p
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return norm
