import math

import numpy as np
import pandas as pd
import pytest

from backend.delay import instantaneous_pair_delays
from backend.diagnostics import (
    check_decay,
    check_delay_integral,
    check_diameter,
    check_shrinkage,
    fit_decay_rate,
    observe,
    series_from_frame,
)
from backend.dynamics import SimState, simulate
from backend.influence import InfluenceFunction
from utils.constants import DIAGNOSTICS_COLUMNS
from utils.errors import UsageError


def _series(t, dV, D=None, dX=None):
    t = np.asarray(t, dtype=float)
    return pd.DataFrame(
        {
            "t": t,
            "dX": np.ones_like(t) if dX is None else dX,
            "dV": dV,
            "Rv": np.asarray(dV) / 2.0,
            "D": np.zeros_like(t) if D is None else D,
            "taubar": np.zeros_like(t),
            "psibar": np.ones_like(t),
        },
        columns=DIAGNOSTICS_COLUMNS,
    )


def test_observe_opposite_velocities():
    X = np.array([[0.0, 0.0], [1.0, 0.0]])
    V = np.array([[1.0, 0.0], [-1.0, 0.0]])
    row = observe(SimState(0.0, X, V), instantaneous_pair_delays(0.0, X, V), InfluenceFunction.constant(1.0))
    assert row["dV"] == pytest.approx(2.0)
    assert row["Rv"] == pytest.approx(1.0)
    assert row["dX"] == pytest.approx(1.0)
    assert row["D"] == 0.0
    assert row["psibar"] == 1.0


def test_observe_single_agent():
    X = np.array([[0.0]])
    V = np.array([[0.4]])
    row = observe(SimState(1.0, X, V), instantaneous_pair_delays(1.0, X, V), InfluenceFunction.constant(1.0))
    assert row["dV"] == 0.0 and row["D"] == 0.0 and row["taubar"] == 0.0


def test_decay_holds_strictly_below_the_envelope():
    t = np.linspace(0.0, 5.0, 11)
    report = check_decay(_series(t, 0.9 * np.exp(-t)), eta=1.0, sigma=1.0, kappa=0.5)
    assert report.holds
    assert report.first_violation is None
    assert report.worst_margin < 0.0


def test_decay_equality_is_a_violation():
    t = np.array([0.0, 1.0, 2.0])
    envelope = 2.0 * np.exp(-1.0 * t)
    dV = np.array([1.0, envelope[1], 0.1])
    report = check_decay(_series(t, dV), eta=1.0, sigma=2.0, kappa=0.5)
    assert not report.holds
    assert report.first_violation == 1.0
    assert report.details["failed_field"] == "dV"
    assert report.violations == 1


def test_decay_flags_the_diameter_bound():
    t = np.array([0.0, 1.0])
    report = check_decay(_series(t, [0.5, 0.1], dX=np.array([1.0, 5.0])), eta=1.0, sigma=1.0, kappa=0.5)
    assert not report.holds
    assert report.details["failed_field"] == "dX"


def test_decay_needs_sigma_above_initial_diameter():
    with pytest.raises(UsageError):
        check_decay(_series([0.0], [2.0]), eta=1.0, sigma=1.0, kappa=1.0)


def test_fit_recovers_the_rate():
    t = np.arange(0.0, 10.5, 0.5)
    rate, r2 = fit_decay_rate(_series(t, 2.0 * np.exp(-0.5 * t)))
    assert rate == pytest.approx(-0.5, rel=1e-10)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_needs_enough_positive_samples():
    t = np.arange(5.0)
    rate, r2 = fit_decay_rate(_series(t, np.exp(-t)))
    assert math.isnan(rate) and math.isnan(r2)


def test_sampled_inequalities_hold_along_a_run(make_config, random_segments):
    segments = random_segments(5, n=4, dim=2)
    config = make_config(n_agents=4, dim=2, c=5.0, dt=0.02, horizon=3.0, kernel=InfluenceFunction.power_law(0.25))
    series = simulate(config, segments).diagnostics
    assert check_diameter(series).holds
    assert check_shrinkage(series, alignment_factor=4.0 * config.coupling).holds
    assert check_delay_integral(series, velocity_lipschitz=0.0).holds


def test_diameter_check_catches_a_jump():
    t = np.array([0.0, 1.0, 2.0])
    report = check_diameter(_series(t, [0.1, 0.1, 0.1], dX=np.array([1.0, 1.1, 3.0])))
    assert not report.holds
    assert report.first_violation == 2.0


def test_series_from_frame_checks_columns(tmp_path):
    frame = _series([0.0, 1.0], [1.0, 0.5])
    path = tmp_path / "diagnostics.csv"
    frame.to_csv(path, index=False)
    reloaded = series_from_frame(path)
    assert list(reloaded.columns) == DIAGNOSTICS_COLUMNS
    with pytest.raises(UsageError):
        series_from_frame(frame.drop(columns=["psibar"]))
