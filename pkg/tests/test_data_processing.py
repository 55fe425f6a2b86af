import json
import math

import numpy as np
import pandas as pd
import pytest

from backend.data_processing import (
    is_decreasing,
    monotone_trend,
    read_trajectories,
    run_query,
    summarize_diagnostics,
    write_csv,
    write_diagnostics,
    write_json,
    write_trajectories,
)
from backend.dynamics import simulate
from utils.errors import UsageError


@pytest.fixture
def series():
    return pd.DataFrame(
        {
            "t": [0.0, 0.5, 1.0],
            "dX": [2.0, 1.9, 1.85],
            "dV": [0.2, 0.12, 0.07],
            "Rv": [0.1, 0.1, 0.1],
            "D": [0.0, 0.01, 0.004],
            "taubar": [0.2, 0.19, 0.18],
            "psibar": [1.0, 1.0, 1.0],
        }
    )


def test_run_query_sees_the_frame():
    out = run_query(pd.DataFrame({"a": [1, 2, 3]}), "SELECT SUM(a) AS total FROM df")
    assert out["total"].iloc[0] == 6


def test_monotone_trend_orders_by_key():
    table = pd.DataFrame({"N": [8, 2, 4], "WT": [0.1, 0.4, 0.2]})
    trend = monotone_trend(table, "N", "WT")
    assert trend["N"].tolist() == [2, 4, 8]
    assert math.isnan(trend["previous"].iloc[0])
    assert trend["change"].iloc[1:].tolist() == pytest.approx([-0.2, -0.1])
    assert trend["decreasing"].all()


def test_strict_trend_rejects_ties():
    table = pd.DataFrame({"c": [1.0, 2.0, 3.0], "total": [0.5, 0.5, 0.1]})
    assert is_decreasing(table, "c", "total")
    assert not is_decreasing(table, "c", "total", strict=True)


def test_trend_flags_an_increase():
    table = pd.DataFrame({"N": [2, 4], "WT": [0.1, 0.3]})
    assert monotone_trend(table, "N", "WT")["decreasing"].tolist() == [True, False]


def test_trend_needs_its_columns():
    with pytest.raises(UsageError):
        monotone_trend(pd.DataFrame({"N": [1]}), "N", "WT")


def test_summarize_diagnostics(series):
    stats = summarize_diagnostics(series.iloc[::-1])
    assert stats["dX_initial"] == 2.0
    assert stats["dX_final"] == 1.85
    assert stats["dV_final"] == 0.07
    assert stats["D_max"] == 0.01
    assert stats["taubar_max"] == 0.2
    assert stats["samples"] == 3


def test_write_diagnostics_drops_extra_columns(series, tmp_path):
    path = write_diagnostics(series.assign(extra=1), tmp_path)
    assert pd.read_csv(path).columns.tolist() == list(series.columns)
    with pytest.raises(UsageError):
        write_diagnostics(series.drop(columns=["D"]), tmp_path)


def test_write_csv_keeps_full_precision(tmp_path):
    value = 1.0 / 3.0
    path = write_csv(pd.DataFrame({"x": [value]}), tmp_path / "nested" / "x.csv")
    assert pd.read_csv(path)["x"].iloc[0] == value


def test_write_json_makes_plain_values(tmp_path):
    path = write_json(
        {"n": np.int64(3), "ok": np.bool_(True), "arr": np.array([0.5, 1.5]), "gap": math.inf, "bad": math.nan},
        tmp_path / "out.json",
    )
    body = json.loads(path.read_text(encoding="utf-8"))
    assert body == {"n": 3, "ok": True, "arr": [0.5, 1.5], "gap": "inf", "bad": "nan"}


def test_trajectory_dump_reloads_every_knot(make_config, approach_segments, tmp_path):
    result = simulate(make_config(dt=0.1, horizon=0.5), approach_segments)
    path = write_trajectories(result.bundle, tmp_path)
    reloaded = read_trajectories(path, 1.0)
    np.testing.assert_array_equal(reloaded.knot_times, result.bundle.knot_times)
    np.testing.assert_array_equal(reloaded.positions, result.bundle.positions)
    np.testing.assert_array_equal(reloaded.velocities, result.bundle.velocities)


def test_read_trajectories_needs_agent_ids(tmp_path):
    path = tmp_path / "bad.csv"
    pd.DataFrame({"t": [0.0], "x_1": [0.0], "v_1": [0.0]}).to_csv(path, index=False)
    with pytest.raises(UsageError):
        read_trajectories(path, 1.0)
