import json

import pandas as pd
import pytest

from backend.config import parse_config
from backend.history import ConstantVelocity, PiecewiseLinearVelocity
from backend.meanfield import StudyResult
from backend.runner import EXIT_INFEASIBLE, EXIT_INVARIANT, EXIT_OK, initial_data_sizes, run


def _config(tmp_path, raw):
    raw = {**raw, "output": {"dir": str(tmp_path / "out"), **raw.get("output", {})}}
    return parse_config(raw)


EQUILIBRIUM = {
    "experiment": "simulate",
    "model": {"c": 5.0, "s": 1.0, "kernel": {"type": "powerlaw", "beta": 0.5}, "dt": 0.05, "horizon": 1.0},
    "initial": {
        "agents": [
            {"x": [0.0, 0.0], "v": [0.3, 0.1]},
            {"x": [1.0, 0.5], "v": [0.3, 0.1]},
            {"x": [-0.5, 2.0], "v": [0.3, 0.1]},
        ]
    },
}

INFEASIBLE = {
    "experiment": "certify",
    "model": {"s": 5.0, "kernel": {"type": "powerlaw", "beta": 2.0}},
    "initial": {"agents": [{"x": [0.0], "v": [5.0]}, {"x": [10.0], "v": [-5.0]}]},
}


def _summary(outcome):
    return json.loads(outcome.artifacts["summary"].read_text(encoding="utf-8"))


def test_equilibrium_simulation_writes_its_artifacts(tmp_path):
    outcome = run(_config(tmp_path, EQUILIBRIUM))
    assert outcome.exit_status == EXIT_OK
    for name in ("diagnostics.csv", "trajectories.csv", "summary.json"):
        assert (tmp_path / "out" / name).is_file()
    series = pd.read_csv(tmp_path / "out" / "diagnostics.csv")
    assert series["dV"].max() <= 1e-14
    summary = _summary(outcome)
    assert summary["exit_status"] == 0
    assert summary["invariant_checks"]["failed"] == 0
    assert summary["config"]["model"]["c"] == 5.0


def test_plots_write_a_static_report(tmp_path):
    outcome = run(_config(tmp_path, {**EQUILIBRIUM, "output": {"plots": True}}))
    report = outcome.artifacts["report"].read_text(encoding="utf-8")
    assert "plotly" in report.lower()
    assert "Flocking run: simulate" in report


def test_infeasible_certificate_exits_with_three(tmp_path):
    outcome = run(_config(tmp_path, INFEASIBLE))
    assert outcome.exit_status == EXIT_INFEASIBLE == 3
    body = json.loads((tmp_path / "out" / "certificate.json").read_text(encoding="utf-8"))
    assert body["feasible"] is False
    assert body["inputs"]["dX0"] == 10.0


def test_feasible_certificate(tmp_path):
    raw = {
        "experiment": "certify",
        "model": {"s": 1.0, "kernel": {"type": "powerlaw", "beta": 0.25}},
        "initial": {"agents": [{"x": [0.0], "v": [0.5]}, {"x": [1.0], "v": [-0.5]}]},
    }
    outcome = run(_config(tmp_path, raw))
    assert outcome.exit_status == EXIT_OK
    summary = _summary(outcome)
    assert summary["c_star"] > 1.0
    body = json.loads(outcome.artifacts["certificate"].read_text(encoding="utf-8"))
    assert body["conditions"]["holds"] is True


def test_beta_sweep_table(tmp_path):
    raw = {"experiment": "sweep", "model": {"s": 1.0}, "sweep": {"kind": "beta", "betas": [0.25, 2.0], "data_sizes": [[1.0, 1.0]]}}
    outcome = run(_config(tmp_path, raw))
    assert outcome.exit_status == EXIT_OK
    table = pd.read_csv(outcome.artifacts["sweep"])
    assert table["feasible"].tolist() == [True, False]
    assert _summary(outcome)["boundary"][0]["last_feasible_beta"] == 0.25


def test_speed_sweep_approaches_the_undelayed_run(tmp_path):
    raw = {
        **EQUILIBRIUM,
        "experiment": "sweep",
        "initial": {"agents": [{"x": [0.0], "v": [0.5]}, {"x": [1.0], "v": [-0.5]}, {"x": [2.5], "v": [0.1]}]},
        "sweep": {"kind": "speed", "speeds": [5.0, 20.0, 80.0]},
    }
    outcome = run(_config(tmp_path, raw))
    assert outcome.exit_status == EXIT_OK
    summary = _summary(outcome)
    assert summary["strictly_decreasing"] is True
    assert summary["ledger_failures"] == 0


def test_order_sweep_reports_three_step_sizes(tmp_path):
    raw = {**EQUILIBRIUM, "experiment": "sweep", "sweep": {"kind": "order", "dts": [0.1, 0.05, 0.025]}}
    outcome = run(_config(tmp_path, raw))
    table = pd.read_csv(outcome.artifacts["sweep"])
    assert table["dt"].tolist() == [0.1, 0.05, 0.025]
    assert table["difference_to_next"].isna().tolist() == [False, False, True]
    assert outcome.exit_status == EXIT_OK
    assert _summary(outcome)["invariant_checks"]["failed"] == 0


MEANFIELD = {
    "experiment": "meanfield",
    "seed": 2,
    "model": {"c": 5.0, "s": 1.0, "kernel": {"type": "powerlaw", "beta": 0.25}, "dt": 0.05, "horizon": 0.3,
              "meanfield_rescale": True},
    "initial": {"law": {"dim": 2, "velocity": {"kind": "ball", "radius": 0.3}, "tail": "shared"}},
    "meanfield": {"study": "both", "n_list": [2, 4], "deltas": [0.1, 0.01], "n": 3},
    "workers": 1,
}


def test_meanfield_studies(tmp_path):
    outcome = run(_config(tmp_path, MEANFIELD))
    assert outcome.exit_status == EXIT_OK
    assert len(pd.read_csv(outcome.artifacts["meanfield"])) == 1
    assert len(pd.read_csv(outcome.artifacts["perturbation"])) == 2
    summary = _summary(outcome)
    assert summary["workers"] == 1
    assert summary["invariant_checks"]["checked"] > 0
    assert summary["invariant_checks"]["failed"] == 0


def test_meanfield_invariant_failure_sets_exit_one(tmp_path, monkeypatch):
    def failing_study(law, n, deltas, config, workers):
        table = pd.DataFrame({"delta": [0.1], "W0": [0.1], "WT": [0.05], "ratio": [0.5]})
        return StudyResult(table, checked=40, failed=1, first_failure="delay bound exceeded at t=0.2 by 1e-09")

    monkeypatch.setattr("backend.runner.perturbation_study", failing_study)
    raw = {**MEANFIELD, "meanfield": {"study": "perturbation", "deltas": [0.1], "n": 3}}
    outcome = run(_config(tmp_path, raw))
    assert outcome.exit_status == EXIT_INVARIANT == 1
    summary = _summary(outcome)
    assert summary["invariant_checks"] == {"checked": 40, "failed": 1, "passed": 39}
    assert summary["first_failure"].startswith("delay bound exceeded")


@pytest.mark.slow
def test_certified_run_decays(tmp_path):
    raw = {
        "experiment": "flock-run",
        "seed": 3,
        "model": {"s": 1.0, "kernel": {"type": "powerlaw", "beta": 0.1}, "dt": 0.05, "sample_every": 4},
        "initial": {"law": {"dim": 2, "n_agents": 5, "position": {"kind": "ball", "radius": 0.25},
                            "velocity": {"kind": "ball", "radius": 0.2}}},
    }
    outcome = run(_config(tmp_path, raw))
    assert outcome.exit_status == EXIT_OK
    report = json.loads(outcome.artifacts["decay_report"].read_text(encoding="utf-8"))
    assert report["holds"] is True
    assert report["certified_rate"] < 0.0
    assert report["c_star"] > 1.0


def test_initial_data_sizes():
    segments = [ConstantVelocity([-1.0], [0.1]), ConstantVelocity([1.0], [-0.1])]
    assert initial_data_sizes(segments, 1.0) == {"dX0": 2.0, "dV0": pytest.approx(0.2), "L_v0": 0.0, "D0": 0.0}


def test_initial_data_sizes_bound_the_delayed_gap():
    segments = [
        PiecewiseLinearVelocity([(-1.0, [0.0]), (0.0, [0.5])], [0.0]),
        ConstantVelocity([1.0], [0.5]),
    ]
    free = initial_data_sizes(segments, 1.0)
    measured = initial_data_sizes(segments, 1.0, c=10.0, kernel=parse_config(EQUILIBRIUM).kernel)
    assert free["L_v0"] == pytest.approx(0.5)
    assert free["D0"] == pytest.approx(0.5)
    assert 0.0 < measured["D0"] <= free["D0"]
