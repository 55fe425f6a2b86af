import numpy as np
import pytest

from backend.dynamics import PicardConfig, simulate
from backend.influence import InfluenceFunction
from backend.picard import analytic_contraction_factor, solve_picard
from utils.errors import ConfigurationError


def test_equilibrium_is_a_fixed_point(make_config, aligned_segments):
    config = make_config(n_agents=3, dim=2, c=5.0)
    result = solve_picard(config, PicardConfig(m=3.0, t_step=0.05), aligned_segments)
    assert result.iterations == 1
    np.testing.assert_allclose(result.velocities[-1], np.tile([0.3, -0.2], (3, 1)), atol=1e-15)


def test_fixed_point_matches_rk4(make_config, approach_segments):
    config = make_config(c=10.0, dt=0.005, horizon=0.1)
    picard = solve_picard(config, PicardConfig(m=5.5, t_step=0.1), approach_segments)
    rk4 = simulate(config, approach_segments)
    assert picard.times[-1] == pytest.approx(0.1)
    np.testing.assert_allclose(picard.velocities[-1], rk4.state.v, atol=1e-6)
    np.testing.assert_allclose(picard.positions[-1], rk4.state.x, atol=1e-6)
    assert picard.within_analytic


@pytest.mark.parametrize("seed", range(20))
def test_fixed_point_matches_rk4_on_random_flocks(make_config, random_segments, seed):
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(2, 6))
    dim = int(rng.integers(1, 4))
    kernel = InfluenceFunction.constant(1.0) if seed % 2 else InfluenceFunction.power_law(0.5)
    config = make_config(n_agents=n, dim=dim, c=10.0, dt=0.001, horizon=0.1, kernel=kernel)
    segments = random_segments(seed, n=n, dim=dim)
    picard = solve_picard(config, PicardConfig(m=5.5, t_step=0.1), segments)
    rk4 = simulate(config, segments)
    np.testing.assert_allclose(picard.velocities[-1], rk4.state.v, rtol=0.0, atol=1e-5)
    np.testing.assert_allclose(picard.positions[-1], rk4.state.x, rtol=0.0, atol=1e-5)


def test_contraction_factor_formula():
    picard = PicardConfig(m=5.5, t_step=0.1)
    assert analytic_contraction_factor(picard, 10.0, 0.0) == pytest.approx(0.2 * (1.0 + 1.1 / 0.45 * 0.1))


def test_long_window_is_a_configuration_error(make_config, approach_segments):
    config = make_config(c=10.0)
    with pytest.raises(ConfigurationError, match="smaller t_step"):
        solve_picard(config, PicardConfig(m=5.5, t_step=10.0), approach_segments)


def test_picard_scheme_runs_to_the_horizon(make_config, approach_segments):
    kernel = InfluenceFunction.power_law(0.5)
    picard = PicardConfig(m=5.5, t_step=0.1)
    chained = simulate(make_config(c=10.0, horizon=0.5, kernel=kernel, scheme="picard", picard=picard), approach_segments)
    rk4 = simulate(make_config(c=10.0, horizon=0.5, dt=0.005, kernel=kernel), approach_segments)
    assert chained.steps == 5
    assert chained.bundle.t_now == pytest.approx(0.5)
    assert chained.ledger.failed == 0
    np.testing.assert_allclose(chained.state.v, rk4.state.v, atol=1e-5)
