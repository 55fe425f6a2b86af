import yaml
from click.testing import CliRunner

from main import cli
from utils.constants import CONFIG_DIRECTORY

EQUILIBRIUM_FILE = CONFIG_DIRECTORY / "equilibrium.yaml"

INFEASIBLE = {
    "experiment": "certify",
    "model": {"s": 5.0, "kernel": {"type": "powerlaw", "beta": 2.0}},
    "initial": {"agents": [{"x": [0.0], "v": [5.0]}, {"x": [10.0], "v": [-5.0]}]},
}


def _write(tmp_path, raw):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(raw), encoding="utf-8")
    return path


def test_cli_simulate(tmp_path):
    result = CliRunner().invoke(cli, ["simulate", "--config", str(EQUILIBRIUM_FILE), "--out-dir", str(tmp_path / "cli")])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "cli" / "summary.json").is_file()


def test_cli_invalid_run_file_exits_with_two(tmp_path):
    raw = yaml.safe_load(EQUILIBRIUM_FILE.read_text(encoding="utf-8"))
    raw["model"]["c"] = 0.5
    path = _write(tmp_path, raw)
    result = CliRunner().invoke(cli, ["simulate", "--config", str(path), "--out-dir", str(tmp_path / "cli")])
    assert result.exit_code == 2


def test_cli_missing_run_file_exits_with_two(tmp_path):
    result = CliRunner().invoke(cli, ["simulate", "--config", str(tmp_path / "absent.yaml")])
    assert result.exit_code == 2


def test_cli_certify_infeasible_exits_with_three(tmp_path):
    path = _write(tmp_path, INFEASIBLE)
    result = CliRunner().invoke(cli, ["certify", "--config", str(path), "--out-dir", str(tmp_path / "cli")])
    assert result.exit_code == 3


def test_cli_certify_beta_sweep(tmp_path):
    path = _write(tmp_path, INFEASIBLE)
    result = CliRunner().invoke(
        cli, ["certify", "--config", str(path), "--out-dir", str(tmp_path / "cli"), "--sweep", "beta=0.25,2"]
    )
    assert result.exit_code == 0, result.output
    assert (tmp_path / "cli" / "sweep.csv").is_file()


def test_cli_rejects_a_malformed_sweep(tmp_path):
    path = _write(tmp_path, INFEASIBLE)
    result = CliRunner().invoke(cli, ["sweep", "--config", str(path), "--sweep", "gamma=1"])
    assert result.exit_code == 2
