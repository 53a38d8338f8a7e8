import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slad.optim import AdamState, FULL_SCALE_CLIP_NORM, FULL_SCALE_EMA_DECAY, FULL_SCALE_LR, adam_step, clip_by_global_norm


def test_reference_constants():
    assert (FULL_SCALE_LR, FULL_SCALE_CLIP_NORM, FULL_SCALE_EMA_DECAY) == (8e-6, 10.0, 0.95)


def test_zero_gradient_leaves_params():
    p = {"w": np.array([1.0, -2.0])}
    state = AdamState()
    adam_step(p, {"w": np.zeros(2)}, state, lr=0.1)
    assert np.array_equal(p["w"], [1.0, -2.0])
    assert state.step == 1


def test_clip_halves_norm_twenty():
    g = {"a": np.array([12.0]), "b": np.array([16.0])}
    clipped, norm = clip_by_global_norm(g, 10.0)
    assert norm == pytest.approx(20.0)
    assert np.allclose(clipped["a"], 6.0) and np.allclose(clipped["b"], 8.0)


@given(st.lists(st.floats(-100, 100, allow_subnormal=False), min_size=2, max_size=6), st.floats(0.1, 50))
def test_clip_preserves_direction(vals, cap):
    g = {"x": np.array(vals)}
    clipped, norm = clip_by_global_norm(g, cap)
    if norm == 0:
        return
    ratio = clipped["x"] / np.where(g["x"] == 0, 1, g["x"])
    nz = g["x"] != 0
    assert np.all(ratio[nz] > 0)
    assert np.allclose(ratio[nz], ratio[nz][0])
    assert np.linalg.norm(clipped["x"]) <= max(cap, norm) * (1 + 1e-12)


def test_quadratic_bowl():
    p = {"x": np.array([1.0])}
    state = AdamState()
    for _ in range(500):
        adam_step(p, {"x": 2 * p["x"]}, state, lr=0.01)
    assert abs(p["x"][0]) < 0.05


def test_first_step_matches_hand_computation():
    # After one step Adam moves each coordinate by lr * g/(|g| + eps').
    p = {"x": np.array([0.5, -0.5])}
    g = np.array([3.0, -0.2])
    adam_step(p, {"x": g}, AdamState(), lr=0.1, clip_norm=None)
    assert np.allclose(p["x"], [0.5 - 0.1, -0.5 + 0.1], atol=1e-7)


def test_weight_decay_is_decoupled():
    p = {"x": np.array([2.0])}
    adam_step(p, {"x": np.zeros(1)}, AdamState(), lr=0.1, weight_decay=0.5, clip_norm=None)
    assert p["x"][0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)


def test_non_finite_gradient_raises():
    with pytest.raises(FloatingPointError):
        adam_step({"x": np.zeros(1)}, {"x": np.array([np.inf])}, AdamState(), lr=0.1)
