import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from backend.history import (
    ConstantVelocity,
    HistoryBundle,
    PiecewiseLinearVelocity,
    TrajectoryHistory,
    append,
    check_lipschitz,
    dump_frame,
    eval_position,
    eval_velocity,
    initial_velocity_lipschitz,
    load_dump,
    required_window,
    sup_norm_diff,
)
from utils.errors import HistoryUnderflowError, InvariantViolationError, ParameterError, UsageError


def test_constant_velocity_past_is_a_straight_line():
    h = TrajectoryHistory.from_initial(ConstantVelocity([1.0, 0.0], [0.5, 0.0]), s_bound=1.0)
    np.testing.assert_allclose(eval_position(h, -2.0), [0.0, 0.0], atol=1e-15)


def test_constant_velocity_past_velocity():
    h = TrajectoryHistory.from_initial(ConstantVelocity([0.0, 0.0], [0.0, 1.0]), s_bound=1.0)
    np.testing.assert_allclose(eval_velocity(h, -5.0), [0.0, 1.0])


def test_piecewise_linear_past_integrates_back_from_zero():
    seg = PiecewiseLinearVelocity([(-1.0, [0.0]), (0.0, [1.0])], [0.0])
    h = TrajectoryHistory.from_initial(seg, s_bound=1.0)
    assert eval_position(h, -1.0)[0] == pytest.approx(-0.5)
    assert eval_position(h, -2.0)[0] == pytest.approx(-0.5)
    assert eval_velocity(h, -0.5)[0] == pytest.approx(0.5)
    assert seg.velocity_lipschitz == pytest.approx(1.0)


def test_hermite_is_exact_on_quadratic_positions():
    h = TrajectoryHistory.from_initial(ConstantVelocity([0.0], [0.0]), s_bound=1.0)
    append(h, 0.1, [0.005], [0.1])
    assert eval_position(h, 0.05)[0] == pytest.approx(0.00125, abs=1e-15)
    assert eval_velocity(h, 0.05)[0] == pytest.approx(0.05, abs=1e-15)


def test_append_rejects_non_increasing_time():
    h = TrajectoryHistory.from_initial(ConstantVelocity([0.0], [0.0]), s_bound=1.0)
    append(h, 0.1, [0.0], [0.0])
    with pytest.raises(UsageError):
        append(h, 0.1, [0.0], [0.0])


def test_append_rejects_excess_speed():
    h = TrajectoryHistory.from_initial(ConstantVelocity([0.0], [0.0]), s_bound=1.0)
    with pytest.raises(InvariantViolationError):
        append(h, 0.1, [0.0], [1.01])


def test_initial_speed_above_bound_is_rejected():
    with pytest.raises(InvariantViolationError):
        HistoryBundle([ConstantVelocity([0.0], [2.0])], s_bound=1.0)


def test_evaluation_past_t_now_is_a_usage_error():
    h = TrajectoryHistory.from_initial(ConstantVelocity([0.0], [0.0]), s_bound=1.0)
    with pytest.raises(UsageError):
        eval_position(h, 0.5)


def test_evaluation_before_window_underflows():
    h = TrajectoryHistory.from_initial(ConstantVelocity([0.0], [0.5]), s_bound=1.0, window=1.0)
    eval_position(h, -1.0)
    with pytest.raises(HistoryUnderflowError):
        eval_position(h, -1.5)


def test_provisional_knot_serves_lookups_beyond_t_now():
    bundle = HistoryBundle([ConstantVelocity([0.0], [1.0])], s_bound=1.0)
    bundle.set_provisional(0.2, [[0.2]], [[1.0]])
    X, V = bundle.evaluate([0], [0.1])
    assert X[0, 0] == pytest.approx(0.1)
    assert V[0, 0] == pytest.approx(1.0)
    with pytest.raises(UsageError):
        bundle.set_provisional(0.0, [[0.0]], [[1.0]])
    bundle.append(0.2, [[0.2]], [[1.0]])
    with pytest.raises(UsageError):
        bundle.evaluate([0], [0.3])


def test_pruned_bundle_underflows_before_its_first_knot():
    bundle = HistoryBundle([ConstantVelocity([0.0], [0.0])], s_bound=1.0)
    for k in range(1, 11):
        bundle.append(0.1 * k, [[0.0]], [[0.0]])
    dropped = bundle.prune(0.55)
    assert dropped == 5
    assert bundle.is_pruned
    bundle.evaluate([0], [0.5])
    with pytest.raises(HistoryUnderflowError):
        bundle.evaluate([0], [0.2])


@pytest.mark.parametrize(
    "dX0, c, s, T, expected",
    [(1.0, 4.0, 1.0, 10.0, 1.0 / 3.0), (1.0, 2.0, 1.0, 3.0, 4.0), (0.0, 2.0, 1.0, 0.0, 0.0)],
)
def test_required_window(dX0, c, s, T, expected):
    assert required_window(dX0, c, s, T) == pytest.approx(expected)


def test_required_window_needs_c_above_s():
    with pytest.raises(ParameterError):
        required_window(1.0, 1.0, 1.0, 1.0)


def test_sup_norm_diff_of_translated_lines():
    h1 = TrajectoryHistory.from_initial(ConstantVelocity([0.0, 0.0], [0.5, 0.0]), s_bound=1.0)
    h2 = TrajectoryHistory.from_initial(ConstantVelocity([3.0, 4.0], [0.5, 0.0]), s_bound=1.0)
    diff = sup_norm_diff(h1, h2, (-1.0, 0.0))
    assert diff.pos_sup == pytest.approx(5.0)
    assert diff.vel_sup == 0.0


def test_sup_norm_diff_of_diverging_agents():
    h1 = TrajectoryHistory.from_initial(ConstantVelocity([0.0], [1.0]), s_bound=1.0)
    h2 = TrajectoryHistory.from_initial(ConstantVelocity([0.0], [-1.0]), s_bound=1.0)
    for t in (0.5, 1.0, 1.5, 2.0):
        append(h1, t, [t], [1.0])
        append(h2, t, [-t], [-1.0])
    diff = sup_norm_diff(h1, h2, (0.0, 2.0))
    assert diff.pos_sup == pytest.approx(4.0)
    assert diff.vel_sup == pytest.approx(2.0)


def test_sup_norm_diff_window_beyond_history():
    h = TrajectoryHistory.from_initial(ConstantVelocity([0.0], [0.0]), s_bound=1.0)
    with pytest.raises(HistoryUnderflowError):
        sup_norm_diff(h, h, (0.0, 1.0))


def test_check_lipschitz_flags_a_jump():
    h = TrajectoryHistory.from_initial(ConstantVelocity([0.0], [0.0]), s_bound=1.0)
    append(h, 0.1, [0.05], [0.5])
    assert check_lipschitz(h)["holds"]
    append(h, 0.2, [0.5], [0.5])
    report = check_lipschitz(h)
    assert not report["holds"]
    assert report["position_excess"] > 0.0


def test_initial_velocity_lipschitz_takes_the_largest_slope():
    segs = [
        ConstantVelocity([0.0], [0.2]),
        PiecewiseLinearVelocity([(-2.0, [0.0]), (0.0, [0.5])], [0.0]),
    ]
    assert initial_velocity_lipschitz(segs) == pytest.approx(0.25)


def test_dump_reloads_to_the_same_history():
    segs = [
        PiecewiseLinearVelocity([(-1.0, [0.0, 0.0]), (0.0, [0.5, 0.0])], [0.0, 0.0]),
        ConstantVelocity([1.0, 1.0], [0.0, -0.5]),
    ]
    bundle = HistoryBundle(segs, s_bound=1.0)
    bundle.append(0.1, [[0.05, 0.0], [1.0, 0.95]], [[0.5, 0.0], [0.0, -0.5]])
    frame = dump_frame(bundle)
    assert (frame["t"] < 0.0).sum() == 1
    reloaded = load_dump(frame, s_bound=1.0)
    times = np.array([-0.7, 0.0, 0.05, 0.1])
    for agent in (0, 1):
        X1, V1 = bundle.evaluate(agent, times)
        X2, V2 = reloaded.evaluate(agent, times)
        np.testing.assert_allclose(X1, X2)
        np.testing.assert_allclose(V1, V2)


@settings(max_examples=50, deadline=None)
@given(
    x0=st.floats(min_value=-10, max_value=10),
    v0=st.floats(min_value=-1, max_value=1),
    t=st.floats(min_value=-20, max_value=0),
)
def test_constant_past_matches_closed_form(x0, v0, t):
    h = TrajectoryHistory.from_initial(ConstantVelocity([x0], [v0]), s_bound=1.0)
    assert eval_position(h, t)[0] == pytest.approx(x0 + v0 * t, abs=1e-12)
