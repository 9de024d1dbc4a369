import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import iterate_axis
from wholebody_mpc.errors import ModelError
from wholebody_mpc.preview import AxisState, PreviewParams, build_preview_matrices, propagate_axis


def test_zero_dynamics():
    assert propagate_axis(AxisState(), 0.0, 0.1) == AxisState(0.0, 0.0, 0.0)


def test_unit_interval_jerk():
    s = propagate_axis(AxisState(), 6.0, 1.0)
    np.testing.assert_allclose(s.as_array(), [1, 3, 6])


def test_constant_velocity():
    s = propagate_axis(AxisState(1.0, 2.0, 0.0), 0.0, 0.5)
    np.testing.assert_allclose(s.as_array(), [2, 2, 0])


def test_two_step_acceleration_operators():
    m = build_preview_matrices(PreviewParams(2, 0.1))
    np.testing.assert_allclose(m.acc_input, [[0.1, 0], [0.1, 0.1]])
    np.testing.assert_allclose(m.acc_state, [[0, 0, 1], [0, 0, 1]])


def test_single_step_unit_period():
    m = build_preview_matrices(PreviewParams(1, 1.0))
    np.testing.assert_allclose(m.pos_state, [[1, 1, 0.5]])
    np.testing.assert_allclose(m.pos_input, [[1 / 6]])


@settings(max_examples=80, deadline=None)
@given(steps=st.integers(1, 50), dt=st.floats(0.005, 0.3), seed=st.integers(0, 2 ** 32 - 1))
def test_stacked_prediction_matches_iteration(steps, dt, seed):
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=3)
    jerks = rng.normal(size=steps) * 10
    pos, vel, acc = build_preview_matrices(PreviewParams(steps, dt)).predict(AxisState(*x0), jerks)
    ref = iterate_axis(x0, jerks, dt)
    np.testing.assert_allclose(np.vstack([pos, vel, acc]), ref, rtol=0, atol=1e-10)


def test_matrices_are_cached_and_read_only():
    a = build_preview_matrices(PreviewParams(16, 0.1))
    b = build_preview_matrices(PreviewParams(16, 0.1))
    assert a is b
    with pytest.raises(ValueError):
        a.pos_input[0, 0] = 1.0


def test_input_operators_are_lower_triangular():
    m = build_preview_matrices(PreviewParams(8, 0.05))
    for op in (m.pos_input, m.vel_input, m.acc_input):
        assert np.all(np.triu(op, 1) == 0)


@pytest.mark.parametrize("steps, dt", [(0, 0.1), (3, 0.0), (2.5, 0.1), (3, -1.0)])
def test_invalid_params(steps, dt):
    with pytest.raises(ValueError):
        PreviewParams(steps, dt)


def test_non_finite_inputs():
    with pytest.raises(ModelError):
        AxisState(np.nan, 0, 0)
    with pytest.raises(ModelError):
        propagate_axis(AxisState(), np.inf, 0.1)
