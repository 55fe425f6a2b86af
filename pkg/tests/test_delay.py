import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from backend.delay import instantaneous_pair_delays, pair_delays, pair_delays_at, retarded_time, solve_retarded
from backend.dynamics import simulate
from backend.history import ConstantVelocity, HistoryBundle, PiecewiseLinearVelocity, TrajectoryHistory
from utils.errors import InvariantViolationError, ParameterError


def test_stationary_target():
    h = TrajectoryHistory.from_initial(ConstantVelocity([0.0, 0.0], [0.0, 0.0]), s_bound=0.0)
    sample = retarded_time(h, 0.0, [3.0, 4.0], 2.0)
    assert sample.tau == pytest.approx(2.5, rel=1e-12)
    np.testing.assert_allclose(sample.x_ret, [0.0, 0.0])


def test_target_moving_towards_observer():
    h = TrajectoryHistory.from_initial(ConstantVelocity([1.0], [1.0]), s_bound=1.0)
    sample = retarded_time(h, 0.0, [0.0], 2.0)
    assert sample.tau == pytest.approx(1.0 / 3.0, rel=1e-12)
    assert sample.x_ret[0] == pytest.approx(2.0 / 3.0, rel=1e-12)
    assert sample.v_ret[0] == pytest.approx(1.0)
    assert sample.residual <= 1e-12 * 2.0


def test_unconverged_solve_raises_instead_of_returning():
    h = TrajectoryHistory.from_initial(ConstantVelocity([1.0], [1.0]), s_bound=1.0)
    with pytest.raises(InvariantViolationError, match="within 1 iterations"):
        solve_retarded(h.bundle, [[0.0]], [0], 0.0, 2.0, max_iters=1)


def test_observer_on_the_path_sees_no_delay():
    h = TrajectoryHistory.from_initial(ConstantVelocity([1.0], [0.5]), s_bound=1.0)
    sample = retarded_time(h, 0.0, [1.0], 3.0)
    assert sample.tau == 0.0
    assert sample.iterations == 0


def test_stationary_pair():
    bundle = HistoryBundle([ConstantVelocity([0.0], [0.0]), ConstantVelocity([6.0], [0.0])], s_bound=1.0)
    delays = pair_delays_at(bundle, 0.0, [[0.0], [6.0]], [[0.0], [0.0]], 3.0)
    np.testing.assert_allclose(delays.tau, [[0.0, 2.0], [2.0, 0.0]], rtol=1e-12)
    assert delays.max_tau == pytest.approx(2.0)
    assert delays[0, 1].x_ret[0] == pytest.approx(6.0)


def test_single_agent_has_no_delays():
    bundle = HistoryBundle([ConstantVelocity([0.0], [0.3])], s_bound=1.0)
    delays = pair_delays_at(bundle, 0.0, [[0.0]], [[0.3]], 3.0)
    assert delays.tau.shape == (1, 1)
    assert delays.max_tau == 0.0


def test_pair_delays_at_the_end_of_a_run(make_config, approach_segments):
    result = simulate(make_config(c=4.0, dt=0.05, horizon=1.0), approach_segments)
    delays = pair_delays(result.state, result.bundle, 4.0)
    gap = abs(result.state.x[1, 0] - result.state.x[0, 0])
    assert delays.t == result.state.t == 1.0
    assert 0.0 < delays.max_tau <= gap / 3.0 + 1e-10
    np.testing.assert_allclose(delays.tau, delays.tau.T, rtol=1e-9)


def test_speed_at_or_below_bound_is_rejected():
    h = TrajectoryHistory.from_initial(ConstantVelocity([1.0], [0.0]), s_bound=1.0)
    with pytest.raises(ParameterError, match="agents travel slower than c"):
        retarded_time(h, 0.0, [0.0], 1.0)


def test_delay_vanishes_as_c_grows():
    h = TrajectoryHistory.from_initial(ConstantVelocity([1.0, 2.0], [0.6, -0.6]), s_bound=1.0)
    z = np.array([-2.0, 0.5])
    d = np.linalg.norm(z - np.array([1.0, 2.0]))
    errors = []
    for c in (10.0, 100.0, 1000.0, 10000.0):
        sample = retarded_time(h, 0.0, z, c)
        errors.append(abs(sample.tau * c - d))
    assert errors[-1] < 1e-3
    assert all(b < a for a, b in zip(errors, errors[1:]))


def test_instantaneous_delays_see_current_state():
    X = np.array([[0.0], [1.0], [3.0]])
    V = np.array([[0.1], [0.0], [-0.1]])
    delays = instantaneous_pair_delays(0.0, X, V)
    assert delays.max_tau == 0.0
    np.testing.assert_allclose(delays.x_ret[0, 2], X[2])
    np.testing.assert_allclose(delays.v_ret[2, 0], V[0])


@settings(max_examples=60, deadline=None)
@given(
    v_old=st.floats(min_value=-0.9, max_value=0.9),
    v_new=st.floats(min_value=-0.9, max_value=0.9),
    z=st.floats(min_value=-20.0, max_value=20.0),
    c=st.floats(min_value=1.1, max_value=50.0),
)
def test_retarded_time_solves_the_light_cone_equation(v_old, v_new, z, c):
    seg = PiecewiseLinearVelocity([(-3.0, [v_old]), (0.0, [v_new])], [0.0])
    bundle = HistoryBundle([seg], s_bound=1.0)
    sol = solve_retarded(bundle, [[z]], [0], 0.0, c)
    tau = float(sol.tau[0])
    x_ret, _ = bundle.evaluate([0], [-tau])
    assert tau >= 0.0
    assert abs(c * tau - abs(z - x_ret[0, 0])) <= 1e-9 * max(1.0, c)
    # delay bound from the speed bound
    assert tau <= abs(z) / (c - 1.0) + 1e-10
