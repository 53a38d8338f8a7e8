"""Noise-prediction MLP conditioned on label, timestep and path coordinate.

Parameters live in a plain ``dict[str, np.ndarray]``.  The forward pass is
written once against :mod:`slad.autodiff` so the same code serves training
(parameters registered on a tape) and inference (bare tensors).

The gamma pathway is a separate projection added to the input layer.  Rows
with ``gamma == 1`` feed it an all-zero embedding, so a model queried only at
``gamma == 1`` never depends on those weights and they can be dropped once
training is over.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .schedule import NoiseSchedule
from .subpath import dl_schedule, sigma_gamma_exact, sigma_gamma_empirical

Params = dict[str, np.ndarray]

EMBEDDING_CONVENTION = "gamma-fourier-1m-zero-at-1/v2"
FROZEN = ("freq.t", "freq.gamma")


@dataclass(frozen=True)
class NetConfig:
    dim: int = 2
    n_labels: int = 8
    T: int = 1000
    width: int = 128
    n_hidden: int = 3
    label_dim: int = 16
    t_freqs: int = 16
    gamma_freqs: int = 8
    t_freq_max: float = 1000.0
    gamma_freq_max: float = 3.0
    sigma_data: float = 0.5
    # c_skip/c_out are evaluated at s = time_scale * t / T.
    time_scale: float = 10_000.0

    @property
    def null_label(self) -> int:
        return self.n_labels

    def to_dict(self) -> dict:
        return asdict(self)


def frequency_bank(n: int, f_max: float) -> np.ndarray:
    return np.geomspace(1.0, f_max, n)


def fourier_embed(values, bank: np.ndarray) -> np.ndarray:
    """``[sin(v*f_i) ..., cos(v*f_i) ...]`` per value; shape ``[n, 2*len(bank)]``."""
    v = np.atleast_1d(np.asarray(values, dtype=np.float64))
    arg = v[:, None] * bank[None, :]
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


def gamma_embedding(gamma, bank: np.ndarray) -> np.ndarray:
    """Fourier features of ``1 - gamma`` with the cosines shifted down by one.

    Every feature tends to zero as ``gamma -> 1``, so the zero vector used
    at ``gamma = 1`` is the continuous limit of what training sees.
    """
    g = np.atleast_1d(np.asarray(gamma, dtype=np.float64))
    emb = fourier_embed(1.0 - g, bank)
    emb[:, len(bank):] -= 1.0
    emb[g == 1.0] = 0.0
    return emb


def init_params(cfg: NetConfig, seed: int) -> Params:
    rng = np.random.default_rng(seed)
    n_in = cfg.dim + 2 * cfg.t_freqs + cfg.label_dim

    def dense(fan_in, fan_out):
        return rng.standard_normal((fan_in, fan_out)) * np.sqrt(1.0 / fan_in)

    p: Params = {
        "freq.t": frequency_bank(cfg.t_freqs, cfg.t_freq_max),
        "freq.gamma": frequency_bank(cfg.gamma_freqs, cfg.gamma_freq_max),
        "label.table": rng.standard_normal((cfg.n_labels + 1, cfg.label_dim)),
        "in.W": dense(n_in, cfg.width),
        "in.b": np.zeros(cfg.width),
        # Zero start: a student copied from a teacher behaves like the
        # teacher for every gamma until training moves these weights.
        "gamma.W": np.zeros((2 * cfg.gamma_freqs, cfg.width)),
    }
    for i in range(cfg.n_hidden):
        p[f"h{i}.W"] = dense(cfg.width, cfg.width)
        p[f"h{i}.b"] = np.zeros(cfg.width)
    p["out.W"] = dense(cfg.width, cfg.dim) * 0.1
    p["out.b"] = np.zeros(cfg.dim)
    return p


def trainable(params: Params) -> list[str]:
    return [n for n in params if n not in FROZEN]


def param_count(cfg: NetConfig) -> int:
    return sum(v.size for k, v in init_params(cfg, 0).items() if k not in FROZEN)


def _labels_onehot(cfg: NetConfig, labels, batch: int) -> np.ndarray:
    c = np.broadcast_to(np.asarray(labels), (batch,))
    if not np.issubdtype(c.dtype, np.integer) or (c < 0).any() or (c > cfg.null_label).any():
        raise ValueError(f"label index out of range [0, {cfg.null_label}]: {labels}")
    out = np.zeros((batch, cfg.n_labels + 1))
    out[np.arange(batch), c] = 1.0
    return out


def _as_tensors(params) -> dict[str, ad.Tensor]:
    first = next(iter(params.values()))
    if isinstance(first, ad.Tensor):
        return params
    return {k: ad.Tensor(v) for k, v in params.items()}


def eps_predict(cfg: NetConfig, params, x, labels, gamma, t, gamma_pathway: bool = True) -> ad.Tensor:
    """Predicted noise for inputs ``x`` of shape ``[batch, dim]``.

    ``params`` is either a dict of arrays or of tape-registered tensors.
    ``labels``, ``gamma`` and ``t`` are scalars or per-row arrays.  With
    ``gamma_pathway=False`` the gamma projection is skipped altogether.
    """
    p = _as_tensors(params)
    xt = x if isinstance(x, ad.Tensor) else ad.Tensor(x)
    if xt.data.ndim != 2 or xt.shape[1] != cfg.dim:
        raise ad.ShapeError(f"expected x of shape [batch, {cfg.dim}], got {xt.shape}")
    n = xt.shape[0]
    t = np.broadcast_to(np.asarray(t), (n,))
    if (t < 0).any() or (t > cfg.T).any():
        raise ValueError(f"t out of range [0, {cfg.T}]")
    gamma = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (n,))
    if (gamma < 0).any() or (gamma > 1).any():
        raise ValueError("gamma out of range [0, 1]")

    t_emb = ad.Tensor(fourier_embed(t / cfg.T, p["freq.t"].data))
    c_emb = ad.Tensor(_labels_onehot(cfg, labels, n)) @ p["label.table"]
    h = ad.affine(ad.concat([xt, t_emb, c_emb], axis=1), p["in.W"], p["in.b"])
    if gamma_pathway:
        g_emb = ad.Tensor(gamma_embedding(gamma, p["freq.gamma"].data))
        h = h + g_emb @ p["gamma.W"]
    h = ad.silu(h)
    for i in range(cfg.n_hidden):
        h = ad.silu(ad.affine(h, p[f"h{i}.W"], p[f"h{i}.b"]))
    return ad.affine(h, p["out.W"], p["out.b"])


def boundary_coeffs(cfg: NetConfig, t):
    """``(c_skip, c_out)``; equal to ``(1, 0)`` exactly at ``t == 0``."""
    s = cfg.time_scale * np.asarray(t, dtype=np.float64) / cfg.T
    sd2 = cfg.sigma_data**2
    return sd2 / (s**2 + sd2), s / np.sqrt(s**2 + sd2)


def noise_levels(sched: NoiseSchedule, gamma, t, k: int, path: str = "SL"):
    """``(alpha, sigma)`` used to turn a noise prediction into a data estimate.

    ``path`` is ``"SL"`` (blended sigma), ``"SL-exact"`` or ``"DL"``.
    At ``gamma == 1`` all three reduce to ``(alpha[t], sigma[t])``.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    t = np.asarray(t)
    a = sched.alpha[t].astype(np.float64)
    s = sched.sigma[t].astype(np.float64)
    inner = gamma < 1.0
    if not inner.any():
        return a, s
    if (t[inner] < k).any():
        raise ValueError(f"t must be >= k={k} wherever gamma < 1")
    gi, ti = gamma[inner], t[inner]
    if path == "DL":
        a[inner], s[inner] = dl_schedule(gi, ti, k, sched)
    elif path == "SL-exact":
        s[inner] = sigma_gamma_exact(gi, ti, k, sched)
    elif path == "SL":
        s[inner] = sigma_gamma_empirical(gi, ti, k, sched)
    else:
        raise ValueError(f"unknown path {path!r}")
    return a, s


def _rows(v, n: int, d: int) -> ad.Tensor:
    return ad.Tensor(np.repeat(np.broadcast_to(np.asarray(v, dtype=np.float64), (n,))[:, None], d, axis=1))


def f_generate(cfg: NetConfig, params, x, labels, gamma, t, sched: NoiseSchedule, k: int = 0,
               path: str = "SL", gamma_pathway: bool = True) -> ad.Tensor:
    """Boundary-respecting data estimate ``c_skip*x + c_out*(x - sigma*eps)/alpha``."""
    if sched.T != cfg.T:
        raise ValueError(f"schedule has T={sched.T} but the network expects T={cfg.T}")
    xt = x if isinstance(x, ad.Tensor) else ad.Tensor(x)
    n, d = xt.shape
    t_arr = np.broadcast_to(np.asarray(t), (n,))
    g_arr = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (n,))
    a, s = noise_levels(sched, g_arr, t_arr, k, path)
    if (a <= 0).any():
        raise ZeroDivisionError("alpha is zero; the data estimate is undefined")
    c_skip, c_out = boundary_coeffs(cfg, t_arr)
    eps = eps_predict(cfg, params, xt, labels, g_arr, t_arr, gamma_pathway)
    denoised = ad.mul(_rows(c_out / a, n, d), xt - ad.mul(_rows(s, n, d), eps))
    return ad.mul(_rows(c_skip, n, d), xt) + denoised


def ema_update(theta: Params, theta_minus: Params, mu: float) -> Params:
    """In-place ``theta_minus <- mu*theta_minus + (1-mu)*theta``; returns it."""
    if not (0.0 <= mu < 1.0):
        raise ValueError(f"EMA decay must be in [0, 1), got {mu}")
    for name, value in theta.items():
        if name in FROZEN:
            continue
        theta_minus[name] = mu * theta_minus[name] + (1.0 - mu) * value
    return theta_minus


def copy_params(params: Params) -> Params:
    return {k: v.copy() for k, v in params.items()}
