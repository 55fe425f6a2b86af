import pytest
import yaml

from backend.config import load_config, merge_overrides, parse_config
from utils.constants import CONFIG_DIRECTORY
from utils.errors import ConfigError


def _simulate_raw(**model):
    return {
        "experiment": "simulate",
        "model": {"c": 5.0, "s": 1.0, "kernel": {"type": "constant"}, **model},
        "initial": {"agents": [{"x": [0.0], "v": [0.2]}, {"x": [1.0], "v": [-0.2]}]},
    }


def _write(tmp_path, raw, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw), encoding="utf-8")
    return path


def test_minimal_run_file_gets_defaults():
    config = parse_config(_simulate_raw())
    sim = config.sim_config()
    assert sim.n_agents == 2 and sim.dim == 1
    assert sim.dt == 0.01 and sim.horizon == 10.0
    assert sim.scheme == "rk4" and sim.delay_model == "finite"
    assert config.seed == 0
    assert config.output_dir.name == "simulate"
    assert not config.plots


def test_c_equal_to_s_is_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config(_simulate_raw(c=1.0))
    assert any("agents travel slower than c" in v for v in info.value.violations)
    assert info.value.exit_status == 2


def test_initial_speed_equal_to_s_is_accepted():
    raw = _simulate_raw()
    raw["initial"]["agents"][0]["v"] = [1.0]
    assert parse_config(raw).segments()[0].max_speed == 1.0


def test_initial_speed_above_s_is_rejected():
    raw = _simulate_raw()
    raw["initial"]["agents"][1]["v"] = [-1.5]
    with pytest.raises(ConfigError, match="exceeds the speed bound"):
        parse_config(raw)


def test_every_violation_is_reported():
    raw = _simulate_raw(dt=-0.1, colour="red")
    del raw["model"]["kernel"]
    raw["bogus"] = 1
    with pytest.raises(ConfigError) as info:
        parse_config(raw)
    text = "\n".join(info.value.violations)
    assert len(info.value.violations) >= 4
    assert "model.kernel is required" in text
    assert "colour" in text and "bogus" in text and "dt" in text


def test_yaml_syntax_error_names_line_and_column(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("experiment: simulate\nmodel: [1, 2\n", encoding="utf-8")
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert "line" in info.value.violations[0] and "column" in info.value.violations[0]


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        load_config("does/not/exist.yaml")


def test_overrides_win(tmp_path):
    path = _write(tmp_path, _simulate_raw())
    config = load_config(path, {"output": {"dir": str(tmp_path / "out"), "plots": True}, "model": {"horizon": 1.0}})
    assert config.output_dir == tmp_path / "out"
    assert config.plots
    assert config.sim_config().horizon == 1.0
    assert config.sim_config().c == 5.0


def test_merge_overrides_is_deep():
    merged = merge_overrides({"model": {"c": 2.0, "s": 1.0}, "seed": 1}, {"model": {"c": 3.0}})
    assert merged == {"model": {"c": 3.0, "s": 1.0}, "seed": 1}


def test_picard_band_defaults_to_the_midpoint():
    config = parse_config(_simulate_raw(scheme="picard", picard={"t_step": 0.05}))
    assert config.picard.m == pytest.approx(3.0)
    assert config.sim_config().scheme == "picard"


def test_picard_band_outside_s_c_is_rejected():
    with pytest.raises(ConfigError, match="band"):
        parse_config(_simulate_raw(scheme="picard", picard={"m": 7.0}))


def test_certify_needs_no_c():
    raw = _simulate_raw()
    raw["experiment"] = "certify"
    del raw["model"]["c"]
    config = parse_config(raw)
    assert config.c is None


def test_beta_sweep_needs_neither_kernel_nor_initial_data():
    config = parse_config({"experiment": "sweep", "model": {"s": 1.0}, "sweep": {"kind": "beta", "betas": [0.5, 1.0]}})
    assert config.sweep["betas"] == [0.5, 1.0]
    assert config.kernel is None


def test_speed_sweep_speeds_must_exceed_s():
    raw = _simulate_raw()
    raw["experiment"] = "sweep"
    raw["sweep"] = {"kind": "speed", "speeds": [0.5, 2.0]}
    with pytest.raises(ConfigError, match="travel slower than c"):
        parse_config(raw)


def test_law_needs_n_agents_for_a_simulation():
    raw = _simulate_raw()
    raw["initial"] = {"law": {"dim": 2}}
    with pytest.raises(ConfigError, match="n_agents"):
        parse_config(raw)


def test_meanfield_law_needs_a_shared_tail():
    raw = _simulate_raw()
    raw["experiment"] = "meanfield"
    raw["initial"] = {"law": {"dim": 2, "velocity": {"kind": "ball", "radius": 0.2}}}
    with pytest.raises(ConfigError, match="tail: shared"):
        parse_config(raw)


def test_law_atoms_follow_the_seed():
    raw = _simulate_raw()
    raw["seed"] = 5
    raw["initial"] = {"law": {"dim": 2, "n_agents": 3}}
    first = parse_config(raw).segments()
    again = parse_config(raw).segments()
    assert [seg.x_at_zero.tolist() for seg in first] == [seg.x_at_zero.tolist() for seg in again]


def test_echo_round_trips_the_kernel():
    echo = parse_config(_simulate_raw()).echo()
    assert echo["model"]["kernel"] == {"type": "constant", "level": 1.0}
    assert len(echo["initial"]["agents"]) == 2


@pytest.mark.parametrize("path", sorted(CONFIG_DIRECTORY.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_run_files_are_valid(path):
    config = load_config(path)
    assert config.experiment in ("simulate", "certify", "flock-run", "meanfield", "sweep")
