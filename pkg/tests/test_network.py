import numpy as np
import pytest

from slad import autodiff as ad
from slad.network import (FROZEN, NetConfig, boundary_coeffs, copy_params, ema_update, eps_predict, f_generate,
                          fourier_embed, frequency_bank, gamma_embedding, init_params, noise_levels, param_count,
                          trainable)
from slad.schedule import make_schedule
from slad.subpath import sigma_gamma_empirical

NET = NetConfig(n_labels=8)
S = make_schedule()


@pytest.fixture(scope="module")
def params():
    return init_params(NET, 3)


def batch(n=16, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, 2)), rng.integers(0, NET.n_labels + 1, n), rng.integers(1, S.T + 1, n)


def test_fourier_embed_basics():
    bank = frequency_bank(8, 100.0)
    e = fourier_embed([0.0], bank)
    assert e.shape == (1, 16)
    assert np.all(e[0, :8] == 0.0) and np.all(e[0, 8:] == 1.0)
    assert bank[0] == 1.0 and bank[-1] == pytest.approx(100.0)


def test_gamma_embedding_zero_at_one_and_continuous():
    bank = frequency_bank(8, 100.0)
    e = gamma_embedding(np.array([1.0, 1 - 1e-9, 0.5, 0.0]), bank)
    assert np.all(e[0] == 0.0)
    assert np.max(np.abs(e[1])) < 1e-6
    assert np.max(np.abs(e[2])) > 0.1


def test_parameter_layout(params):
    assert params["label.table"].shape[0] == NET.n_labels + 1
    assert all(np.isfinite(v).all() for v in params.values())
    assert param_count(NET) == param_count(NET)
    assert set(FROZEN) & set(trainable(params)) == set()
    a, b = init_params(NET, 3), init_params(NET, 3)
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_output_shape(params):
    x, c, t = batch()
    for dim in (1, 2, 5):
        cfg = NetConfig(dim=dim, n_labels=3, width=16)
        p = init_params(cfg, 0)
        out = eps_predict(cfg, p, np.ones((4, dim)), 0, 0.3, 10)
        assert out.shape == (4, dim)
    assert eps_predict(NET, params, x, c, 0.5, t).shape == x.shape


def test_bad_inputs_raise(params):
    x, _, _ = batch()
    with pytest.raises(ValueError):
        eps_predict(NET, params, x, NET.null_label + 1, 1.0, 5)
    with pytest.raises(ValueError):
        eps_predict(NET, params, x, -1, 1.0, 5)
    with pytest.raises(ValueError):
        eps_predict(NET, params, x, 0, 1.2, 5)
    with pytest.raises(ValueError):
        eps_predict(NET, params, x, 0, 1.0, S.T + 1)
    with pytest.raises(ad.ShapeError):
        eps_predict(NET, params, np.ones((3, 4)), 0, 1.0, 5)


def test_gamma_one_ignores_gamma_weights(params):
    x, c, t = batch()
    base = eps_predict(NET, params, x, c, 1.0, t).data
    cut = eps_predict(NET, params, x, c, 1.0, t, gamma_pathway=False).data
    assert np.array_equal(base, cut)
    noisy = copy_params(params)
    noisy["gamma.W"] = np.random.default_rng(9).standard_normal(noisy["gamma.W"].shape)
    assert np.array_equal(eps_predict(NET, noisy, x, c, 1.0, t).data, base)
    assert not np.array_equal(eps_predict(NET, noisy, x, c, 0.5, t).data, eps_predict(NET, params, x, c, 0.5, t).data)


def test_eps_gradient_matches_finite_differences(params):
    x, c, t = batch(8)
    p = copy_params(params)
    p["gamma.W"] = np.random.default_rng(1).standard_normal(p["gamma.W"].shape) * 0.1
    rng = np.random.default_rng(2)
    g = rng.random(8)
    tape = ad.Tape()
    tp = tape.params({k: p[k] for k in trainable(p)})
    tp.update({k: ad.Tensor(p[k]) for k in FROZEN})
    grads = ad.backward(ad.mean(eps_predict(NET, tp, x, c, g, t)))
    for name in ("in.W", "gamma.W", "h1.W", "out.b", "label.table"):
        idx = tuple(rng.integers(0, s) for s in p[name].shape)
        h = 1e-5
        up, dn = copy_params(p), copy_params(p)
        up[name][idx] += h
        dn[name][idx] -= h
        fd = (float(ad.mean(eps_predict(NET, up, x, c, g, t)).data)
              - float(ad.mean(eps_predict(NET, dn, x, c, g, t)).data)) / (2 * h)
        assert abs(grads[name][idx] - fd) / max(1.0, abs(fd)) < 1e-4


def test_boundary_at_zero(params):
    rng = np.random.default_rng(5)
    x = rng.standard_normal((32, 2)) * 10
    out = f_generate(NET, params, x, rng.integers(0, 9, 32), rng.random(32), 0, S)
    assert np.array_equal(out.data, x)
    c_skip, c_out = boundary_coeffs(NET, 0)
    assert c_skip == 1.0 and c_out == 0.0


def test_boundary_weights_favour_the_network_away_from_zero():
    t = np.arange(1, S.T + 1)
    c_skip, c_out = boundary_coeffs(NET, t)
    assert np.all(c_out > c_skip)
    assert np.all(np.diff(c_skip) < 0)


def test_zero_eps_plug_in():
    p = init_params(NET, 0)
    p["out.W"][:] = 0.0
    p["out.b"][:] = 0.0
    x = np.random.default_rng(0).standard_normal((5, 2))
    t = 400
    c_skip, c_out = boundary_coeffs(NET, t)
    out = f_generate(NET, p, x, 0, 1.0, t, S).data
    assert np.allclose(out, c_skip * x + c_out * x / S.alpha[t], rtol=1e-14)


def test_generator_is_denoiser_over_alpha(params):
    x, c, t = batch(20, 7)
    g = np.random.default_rng(7).random(20)
    t = np.maximum(t, 100)
    eps = eps_predict(NET, params, x, c, g, t).data
    sig = sigma_gamma_empirical(g, t, 100, S)[:, None]
    denoiser = x - sig * eps
    c_skip, c_out = boundary_coeffs(NET, t)
    expect = c_skip[:, None] * x + c_out[:, None] * denoiser / S.alpha[t][:, None]
    out = f_generate(NET, params, x, c, g, t, S, k=100).data
    assert np.max(np.abs(out - expect)) < 1e-12 * (1 + np.abs(expect).max())


def test_noise_levels_at_gamma_one_never_look_back():
    a, s = noise_levels(S, np.ones(3), np.array([5, 10, 20]), 100, "SL")
    assert np.array_equal(a, S.alpha[[5, 10, 20]]) and np.array_equal(s, S.sigma[[5, 10, 20]])
    with pytest.raises(ValueError):
        noise_levels(S, np.array([0.5]), np.array([50]), 100)
    for path in ("SL", "SL-exact", "DL"):
        a, s = noise_levels(S, np.array([1.0, 1.0]), np.array([300, 900]), 100, path)
        assert np.array_equal(s, S.sigma[[300, 900]])


def test_ema_examples():
    theta = {"w": np.ones(3), "freq.t": np.ones(2)}
    tm = {"w": np.zeros(3), "freq.t": np.zeros(2)}
    ema_update(theta, tm, 0.95)
    assert np.allclose(tm["w"], 0.05)
    assert np.array_equal(tm["freq.t"], np.zeros(2))
    ema_update(theta, tm, 0.0)
    assert np.array_equal(tm["w"], theta["w"])
    with pytest.raises(ValueError):
        ema_update(theta, tm, 1.0)


def test_ema_converges_geometrically():
    theta = {"w": np.array([2.0])}
    tm = {"w": np.array([0.0])}
    for n in range(1, 60):
        ema_update(theta, tm, 0.9)
        assert tm["w"][0] == pytest.approx(2.0 * (1 - 0.9**n), rel=1e-12)
