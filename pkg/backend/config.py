"""
Run files: one YAML document per experiment, validated as a whole.

Every violation found is collected before `ConfigError` is raised, so a run
file can be fixed in one pass. Defaults come from utils/constants.py.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from backend.dynamics import DELAY_FINITE, DELAY_MODELS, SCHEME_PICARD, SCHEME_RK4, SCHEMES, PicardConfig, SimConfig
from backend.history import ConstantVelocity, InitialSegment, PiecewiseLinearVelocity
from backend.influence import InfluenceFunction, kernel_violations
from backend.meanfield import POSITION_KINDS, TAIL_FREE, TAIL_SHARED, VELOCITY_KINDS, InitialLaw
from utils.constants import (
    APPEND_SPEED_SLACK,
    DEFAULT_BETAS,
    DEFAULT_DATA_SIZES,
    DEFAULT_DELTAS,
    DEFAULT_DT,
    DEFAULT_HORIZON,
    DEFAULT_LAW_DIM,
    DEFAULT_N_LIST,
    DEFAULT_OUTPUT_DIRECTORY,
    DEFAULT_PERTURBATION_N,
    DEFAULT_PICARD_T_STEP,
    DEFAULT_SAMPLE_EVERY,
    DEFAULT_SEED,
    DEFAULT_SPEEDS,
    EPSILON_MENU,
    ETA_GRID_POINTS,
    EXPERIMENTS,
    FLOCK_HORIZON_OVER_ETA,
    PICARD_GRID,
    PICARD_MAX_ITERS,
    PICARD_TOL,
    SIGMA_FACTORS,
    SPEED_GRID_POINTS,
    SPEED_SLACK,
)
from utils.errors import ConfigError, ParameterError

SWEEP_BETA = "beta"
SWEEP_SPEED = "speed"
SWEEP_ORDER = "order"
SWEEP_KINDS = (SWEEP_BETA, SWEEP_SPEED, SWEEP_ORDER)

STUDY_CONVERGENCE = "convergence"
STUDY_PERTURBATION = "perturbation"
STUDY_BOTH = "both"
MEANFIELD_STUDIES = (STUDY_CONVERGENCE, STUDY_PERTURBATION, STUDY_BOTH)

TOP_LEVEL_KEYS = {"experiment", "seed", "workers", "model", "initial", "certificate", "meanfield", "sweep", "output"}
MODEL_KEYS = {
    "c", "s", "kernel", "dt", "horizon", "sample_every", "scheme", "delay_model",
    "meanfield_rescale", "prune_history", "init_window", "speed_slack", "picard",
}


@dataclass
class RunConfig:
    """A validated run file. `model` holds the SimConfig fields other than N, d, c, s and kernel."""

    experiment: str
    seed: int
    workers: int | None
    s: float
    c: float | None
    kernel: InfluenceFunction | None
    model: dict
    picard: PicardConfig | None = None
    agents: list[InitialSegment] | None = None
    law: InitialLaw | None = None
    law_agents: int | None = None
    certificate: dict = field(default_factory=dict)
    meanfield: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    output_dir: Path = DEFAULT_OUTPUT_DIRECTORY
    plots: bool = False
    source: str | None = None

    @property
    def dim(self) -> int:
        if self.agents:
            return self.agents[0].dim
        if self.law is not None:
            return self.law.dim
        return DEFAULT_LAW_DIM

    def segments(self, n: int | None = None) -> list[InitialSegment]:
        """Explicit agents, or the first n (default `initial.law.n_agents`) atoms of the law."""
        if self.agents is not None:
            return list(self.agents)
        if self.law is None:
            raise ParameterError("run file has no initial data")
        n = self.law_agents if n is None else n
        if n is None:
            raise ParameterError("initial.law needs n_agents for this experiment")
        return [self.law.sample_atom(i) for i in range(n)]

    def sim_config(self, n_agents: int | None = None, c: float | None = None, **overrides) -> SimConfig:
        """SimConfig for N agents at speed c (default model.c); overrides replace model fields before validation."""
        n = n_agents if n_agents is not None else len(self.segments())
        speed = self.c if c is None else c
        if speed is None:
            raise ParameterError("model.c is required for this experiment")
        fields = {
            "n_agents": n,
            "dim": self.dim,
            "c": float(speed),
            "s": self.s,
            "kernel": self.kernel,
            "picard": self.picard,
            **self.model,
        }
        fields.update(overrides)
        return SimConfig(**fields)

    def echo(self) -> dict:
        """The resolved run file, defaults filled, for the run summary."""
        out = {
            "experiment": self.experiment,
            "seed": self.seed,
            "workers": self.workers,
            "model": {
                "c": self.c,
                "s": self.s,
                "kernel": self.kernel.to_config() if self.kernel is not None else None,
                **self.model,
                "picard": None if self.picard is None else vars(self.picard),
            },
            "certificate": self.certificate,
            "meanfield": self.meanfield,
            "sweep": self.sweep,
            "output": {"dir": str(self.output_dir), "plots": self.plots},
        }
        if self.agents is not None:
            out["initial"] = {"agents": [seg.to_config() for seg in self.agents]}
        elif self.law is not None:
            out["initial"] = {"law": {**vars(self.law), "n_agents": self.law_agents}}
        return out


# --------- FIELD READERS ---------

def _mapping(raw, where: str, problems: list[str]) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        problems.append(f"{where} must be a mapping, got {type(raw).__name__}")
        return {}
    return raw


def _unknown(block: dict, allowed: set, where: str, problems: list[str]):
    for key in sorted(set(block) - allowed, key=str):
        problems.append(f"{where}: unknown key {key!r}")


def _number(block: dict, key: str, where: str, problems: list[str], default=None, *, required=False,
            positive=False, minimum=None, integer=False):
    """Read one number; records a violation and returns the default when absent or invalid."""
    if key not in block or block[key] is None:
        if required:
            problems.append(f"{where}.{key} is required")
        return default
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append(f"{where}.{key} must be a number, got {value!r}")
        return default
    if integer and not float(value).is_integer():
        problems.append(f"{where}.{key} must be an integer, got {value!r}")
        return default
    value = int(value) if integer else float(value)
    if not math.isfinite(value):
        problems.append(f"{where}.{key} must be finite, got {value!r}")
        return default
    if positive and not value > 0:
        problems.append(f"{where}.{key} must be > 0, got {value!r}")
        return default
    if minimum is not None and value < minimum:
        problems.append(f"{where}.{key} must be >= {minimum}, got {value!r}")
        return default
    return value


def _flag(block: dict, key: str, where: str, problems: list[str], default: bool = False) -> bool:
    value = block.get(key, default)
    if value is None:
        return default
    if not isinstance(value, bool):
        problems.append(f"{where}.{key} must be true or false, got {value!r}")
        return default
    return value


def _choice(block: dict, key: str, where: str, choices, problems: list[str], default=None, *, required=False):
    value = block.get(key, default)
    if value is None:
        if required:
            problems.append(f"{where}.{key} is required (one of {list(choices)})")
        return default
    value = str(value).strip().lower()
    if value not in choices:
        problems.append(f"{where}.{key} must be one of {list(choices)}, got {block.get(key)!r}")
        return default
    return value


def _vector(value, where: str, problems: list[str]) -> np.ndarray | None:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, (list, tuple)) or not value:
        problems.append(f"{where} must be a non-empty list of numbers, got {value!r}")
        return None
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
        problems.append(f"{where} must contain numbers only, got {value!r}")
        return None
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        problems.append(f"{where} must be finite, got {value!r}")
        return None
    return arr


def _number_list(block: dict, key: str, where: str, problems: list[str], default, *, positive=False,
                 integer=False, increasing=False, min_len=1):
    if key not in block or block[key] is None:
        return list(default) if default is not None else None
    arr = _vector(block[key], f"{where}.{key}", problems)
    if arr is None:
        return list(default) if default is not None else None
    bad = False
    if arr.size < min_len:
        problems.append(f"{where}.{key} needs at least {min_len} entries")
        bad = True
    if positive and np.any(arr <= 0.0):
        problems.append(f"{where}.{key} entries must be > 0, got {block[key]!r}")
        bad = True
    if integer and np.any(arr != np.round(arr)):
        problems.append(f"{where}.{key} entries must be integers, got {block[key]!r}")
        bad = True
    if increasing and np.any(np.diff(arr) <= 0.0):
        problems.append(f"{where}.{key} must be strictly increasing, got {block[key]!r}")
        bad = True
    if bad:
        return list(default) if default is not None else None
    return [int(v) for v in arr] if integer else arr.tolist()


# --------- BLOCK PARSERS ---------

def _parse_kernel(raw, problems: list[str]) -> InfluenceFunction | None:
    block = _mapping(raw, "model.kernel", problems)
    if not block:
        return None
    kind = str(block.get("type", "")).strip().lower()
    beta = _number(block, "beta", "model.kernel", problems, 0.0)
    level = _number(block, "level", "model.kernel", problems, 1.0)
    knots = block.get("knots") or ()
    try:
        knots = tuple(tuple(float(v) for v in knot) for knot in knots)
    except (TypeError, ValueError):
        problems.append(f"model.kernel.knots must be a list of [s, psi] pairs, got {block.get('knots')!r}")
        return None
    found = [f"model.kernel: {p}" for p in kernel_violations(kind, beta, level, knots)]
    if found:
        problems.extend(found)
        return None
    return InfluenceFunction.from_config({"type": kind, "beta": beta, "level": level, "knots": knots})


def _parse_picard(raw, c, s, problems: list[str]) -> PicardConfig | None:
    block = _mapping(raw, "model.picard", problems)
    if not block:
        return None
    where = "model.picard"
    _unknown(block, {"m", "t_step", "max_iters", "tol", "grid"}, where, problems)
    m = _number(block, "m", where, problems)
    if m is None and c is not None:
        m = 0.5 * (s + c)
    t_step = _number(block, "t_step", where, problems, DEFAULT_PICARD_T_STEP, positive=True)
    picard = PicardConfig(
        m=m if m is not None else math.nan,
        t_step=t_step,
        max_iters=_number(block, "max_iters", where, problems, PICARD_MAX_ITERS, integer=True, minimum=1),
        tol=_number(block, "tol", where, problems, PICARD_TOL, positive=True),
        grid=_number(block, "grid", where, problems, PICARD_GRID, integer=True, minimum=1),
    )
    if c is not None:
        problems.extend(f"{where}: {p}" for p in picard.violations(c, s) if "band" in p)
    return picard


def _parse_model(raw, experiment: str, sweep_kind: str | None, problems: list[str]):
    block = _mapping(raw, "model", problems)
    _unknown(block, MODEL_KEYS, "model", problems)
    s = _number(block, "s", "model", problems, required=True, positive=True)
    needs_c = experiment in ("simulate", "meanfield") or (experiment == "sweep" and sweep_kind == SWEEP_ORDER)
    c = _number(block, "c", "model", problems, required=needs_c)
    if c is not None and s is not None and not c > s:
        problems.append(f"model: c={c} must exceed s={s}: the agents travel slower than c")
        c = None

    needs_kernel = not (experiment == "sweep" and sweep_kind == SWEEP_BETA)
    kernel = None
    if "kernel" in block:
        kernel = _parse_kernel(block["kernel"], problems)
    elif needs_kernel:
        problems.append("model.kernel is required")

    model = {
        "dt": _number(block, "dt", "model", problems, DEFAULT_DT, positive=True),
        "horizon": _number(block, "horizon", "model", problems, DEFAULT_HORIZON, minimum=0.0),
        "sample_every": _number(block, "sample_every", "model", problems, DEFAULT_SAMPLE_EVERY, integer=True, minimum=1),
        "scheme": _choice(block, "scheme", "model", SCHEMES, problems, SCHEME_RK4),
        "delay_model": _choice(block, "delay_model", "model", DELAY_MODELS, problems, DELAY_FINITE),
        "meanfield_rescale": _flag(block, "meanfield_rescale", "model", problems),
        "prune_history": _flag(block, "prune_history", "model", problems),
        "init_window": _number(block, "init_window", "model", problems, None, minimum=0.0),
        "speed_slack": _number(block, "speed_slack", "model", problems, SPEED_SLACK, positive=True),
    }
    if 0.0 < model["horizon"] < model["dt"]:
        problems.append(f"model: horizon {model['horizon']} is shorter than one step dt={model['dt']}")
    picard = _parse_picard(block.get("picard"), c, s if s is not None else 0.0, problems)
    if model["scheme"] == SCHEME_PICARD:
        if picard is None:
            problems.append("model: scheme 'picard' needs a picard block {m, t_step}")
        if model["delay_model"] != DELAY_FINITE:
            problems.append("model: scheme 'picard' integrates the finite-speed model only")
    return s, c, kernel, model, picard


def _parse_agents(raw, s, problems: list[str]) -> list[InitialSegment] | None:
    if not isinstance(raw, list) or not raw:
        problems.append("initial.agents must be a non-empty list")
        return None
    segments, dims = [], set()
    for idx, item in enumerate(raw):
        where = f"initial.agents[{idx}]"
        if not isinstance(item, dict):
            problems.append(f"{where} must be a mapping with x and v (or v_knots)")
            continue
        _unknown(item, {"x", "v", "v_knots"}, where, problems)
        x = _vector(item.get("x"), f"{where}.x", problems)
        if x is None:
            continue
        dims.add(x.size)
        if ("v" in item) == ("v_knots" in item):
            problems.append(f"{where} needs exactly one of v or v_knots")
            continue
        if "v" in item:
            v = _vector(item["v"], f"{where}.v", problems)
            if v is None:
                continue
            knots = [(0.0, v)]
        else:
            knots = []
            for k, knot in enumerate(item["v_knots"] or []):
                if not isinstance(knot, (list, tuple)) or len(knot) != 2:
                    problems.append(f"{where}.v_knots[{k}] must be [t, [v...]]")
                    continue
                t = _number({"t": knot[0]}, "t", f"{where}.v_knots[{k}]", problems, required=True)
                vk = _vector(knot[1], f"{where}.v_knots[{k}].v", problems)
                if t is not None and vk is not None:
                    knots.append((t, vk))
            if not knots:
                problems.append(f"{where}.v_knots must list at least one [t, [v...]] knot")
                continue
        if any(v.size != x.size for _, v in knots):
            problems.append(f"{where}: velocity and position dimensions differ")
            continue
        if s is not None:
            speed = max(float(np.linalg.norm(v)) for _, v in knots)
            if speed > s + APPEND_SPEED_SLACK:
                problems.append(f"{where}: initial speed {speed:.12g} exceeds the speed bound s={s}")
                continue
        try:
            if "v" in item:
                segments.append(ConstantVelocity(x, knots[0][1]))
            else:
                segments.append(PiecewiseLinearVelocity(knots, x))
        except ParameterError as exc:
            problems.append(f"{where}: {exc}")
    if len(dims) > 1:
        problems.append(f"initial.agents live in different dimensions {sorted(dims)}")
    return segments if len(segments) == len(raw) else None


def _parse_law(raw, s, seed: int, experiment: str, problems: list[str]) -> tuple[InitialLaw | None, int | None]:
    block = _mapping(raw, "initial.law", problems)
    where = "initial.law"
    _unknown(block, {"dim", "position", "velocity", "tail", "tail_velocity", "ramp", "n_agents"}, where, problems)
    dim = _number(block, "dim", where, problems, DEFAULT_LAW_DIM, integer=True, minimum=1)
    n_agents = _number(block, "n_agents", where, problems, None, integer=True, minimum=1,
                       required=experiment in ("simulate", "certify", "flock-run"))
    position = _mapping(block.get("position"), f"{where}.position", problems)
    velocity = _mapping(block.get("velocity"), f"{where}.velocity", problems)

    def center(part: dict, name: str) -> tuple:
        if part.get("center") is None:
            return ()
        vec = _vector(part["center"], f"{where}.{name}.center", problems)
        return () if vec is None else tuple(vec.tolist())

    tail_velocity = ()
    if block.get("tail_velocity") is not None:
        vec = _vector(block["tail_velocity"], f"{where}.tail_velocity", problems)
        tail_velocity = () if vec is None else tuple(vec.tolist())
    if s is None:
        return None, n_agents
    try:
        law = InitialLaw(
            dim=dim,
            speed_bound=s,
            position_kind=_choice(position, "kind", f"{where}.position", POSITION_KINDS, problems, "box"),
            position_center=center(position, "position"),
            position_radius=_number(position, "radius", f"{where}.position", problems, 1.0, minimum=0.0),
            velocity_kind=_choice(velocity, "kind", f"{where}.velocity", VELOCITY_KINDS, problems, "ball"),
            velocity_center=center(velocity, "velocity"),
            velocity_radius=_number(velocity, "radius", f"{where}.velocity", problems, 0.5 * s, minimum=0.0),
            tail=_choice(block, "tail", where, (TAIL_FREE, TAIL_SHARED), problems, TAIL_FREE),
            tail_velocity=tail_velocity,
            ramp=_number(block, "ramp", where, problems, 1.0, positive=True),
            seed=seed,
        )
    except ParameterError as exc:
        problems.extend(f"{where}: {p}" for p in str(exc).split("; "))
        return None, n_agents
    if experiment == "meanfield" and law.tail == TAIL_FREE and law.velocity_kind != "point":
        # atoms with different constant tails are infinitely far apart
        problems.append(f"{where}: meanfield studies need tail: shared or velocity.kind: point")
    return law, n_agents


def _parse_initial(raw, s, seed: int, experiment: str, sweep_kind: str | None, problems: list[str]):
    block = _mapping(raw, "initial", problems)
    _unknown(block, {"agents", "law"}, "initial", problems)
    if not block:
        if not (experiment == "sweep" and sweep_kind == SWEEP_BETA):
            problems.append("initial is required (agents or law)")
        return None, None, None
    if ("agents" in block) == ("law" in block):
        problems.append("initial needs exactly one of agents or law")
        return None, None, None
    if "agents" in block:
        if experiment == "meanfield":
            problems.append("meanfield experiments sample from initial.law, not explicit agents")
        return _parse_agents(block["agents"], s, problems), None, None
    law, n_agents = _parse_law(block["law"], s, seed, experiment, problems)
    return None, law, n_agents


def _parse_certificate(raw, problems: list[str]) -> dict:
    block = _mapping(raw, "certificate", problems)
    where = "certificate"
    _unknown(block, {"eta", "epsilons", "sigma_factors", "sigma_values", "eta_grid_points",
                     "speed_grid_points", "horizon_over_eta"}, where, problems)
    eta = _number(block, "eta", where, problems, None)
    if eta is not None and not 0.0 < eta < 1.0:
        problems.append(f"certificate.eta must lie in (0, 1), got {eta}")
        eta = None
    sigma_factors = _number_list(block, "sigma_factors", where, problems, SIGMA_FACTORS, positive=True)
    if any(f <= 1.0 for f in sigma_factors):
        problems.append(f"certificate.sigma_factors must all exceed 1, got {sigma_factors}")
    return {
        "eta": eta,
        "epsilons": _number_list(block, "epsilons", where, problems, EPSILON_MENU, positive=True),
        "sigma_factors": sigma_factors,
        "sigma_values": _number_list(block, "sigma_values", where, problems, None, positive=True),
        "eta_grid_points": _number(block, "eta_grid_points", where, problems, ETA_GRID_POINTS, integer=True, minimum=2),
        "speed_grid_points": _number(block, "speed_grid_points", where, problems, SPEED_GRID_POINTS, integer=True, minimum=2),
        "horizon_over_eta": _number(block, "horizon_over_eta", where, problems, FLOCK_HORIZON_OVER_ETA, positive=True),
    }


def _parse_meanfield(raw, problems: list[str]) -> dict:
    block = _mapping(raw, "meanfield", problems)
    where = "meanfield"
    _unknown(block, {"study", "n_list", "deltas", "n"}, where, problems)
    return {
        "study": _choice(block, "study", where, MEANFIELD_STUDIES, problems, STUDY_BOTH),
        "n_list": _number_list(block, "n_list", where, problems, DEFAULT_N_LIST, positive=True, integer=True,
                               increasing=True, min_len=2),
        "deltas": _number_list(block, "deltas", where, problems, DEFAULT_DELTAS, positive=True),
        "n": _number(block, "n", where, problems, DEFAULT_PERTURBATION_N, integer=True, minimum=1),
    }


def _parse_sweep(block: dict, s, experiment: str, problems: list[str]) -> dict:
    where = "sweep"
    _unknown(block, {"kind", "betas", "data_sizes", "speeds", "dts"}, where, problems)
    kind = _choice(block, "kind", where, SWEEP_KINDS, problems, required=experiment == "sweep")
    betas = _number_list(block, "betas", where, problems, DEFAULT_BETAS)
    if any(b < 0.0 for b in betas):
        problems.append(f"sweep.betas must be >= 0, got {betas}")
    sizes = block.get("data_sizes", DEFAULT_DATA_SIZES)
    data_sizes = []
    for idx, pair in enumerate(sizes or []):
        arr = _vector(pair, f"sweep.data_sizes[{idx}]", problems)
        if arr is None:
            continue
        if arr.size != 2 or np.any(arr < 0.0):
            problems.append(f"sweep.data_sizes[{idx}] must be a [dX0, dV0] pair of numbers >= 0, got {pair!r}")
            continue
        data_sizes.append((float(arr[0]), float(arr[1])))
    speeds = _number_list(block, "speeds", where, problems, DEFAULT_SPEEDS, positive=True, increasing=True, min_len=2)
    if s is not None and any(c <= s for c in speeds):
        problems.append(f"sweep.speeds must all exceed s={s}: the agents travel slower than c")
    dts = _number_list(block, "dts", where, problems, None, positive=True)
    if dts is not None and len(dts) != 3:
        problems.append(f"sweep.dts must list exactly three step sizes, got {dts}")
        dts = None
    return {"kind": kind, "betas": betas, "data_sizes": data_sizes, "speeds": speeds, "dts": dts}


# --------- ENTRY POINTS ---------

def parse_config(raw, source: str | None = None) -> RunConfig:
    """
    Validate an already-parsed run file.

    Parameters:
        raw: Mapping loaded from YAML
        source: Where it came from (used in error messages)

    Returns:
        RunConfig: Validated config with defaults filled

    Raises:
        ConfigError: Every violation found, not just the first
    """
    problems: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError([f"run file must be a mapping at the top level, got {type(raw).__name__}"], source)
    _unknown(raw, TOP_LEVEL_KEYS, "run file", problems)

    experiment = _choice(raw, "experiment", "run file", EXPERIMENTS, problems, required=True)
    seed = _number(raw, "seed", "run file", problems, DEFAULT_SEED, integer=True, minimum=0)
    workers = _number(raw, "workers", "run file", problems, None, integer=True, minimum=1)
    sweep_block = _mapping(raw.get("sweep"), "sweep", problems)
    sweep_kind = str(sweep_block.get("kind", "")).strip().lower() or None

    s, c, kernel, model, picard = _parse_model(raw.get("model"), experiment, sweep_kind, problems)
    agents, law, law_agents = _parse_initial(raw.get("initial"), s, seed, experiment, sweep_kind, problems)
    certificate = _parse_certificate(raw.get("certificate"), problems)
    meanfield = _parse_meanfield(raw.get("meanfield"), problems)
    sweep = _parse_sweep(sweep_block, s, experiment, problems)

    output = _mapping(raw.get("output"), "output", problems)
    _unknown(output, {"dir", "plots"}, "output", problems)
    out_dir = Path(output["dir"]) if output.get("dir") else DEFAULT_OUTPUT_DIRECTORY / (experiment or "run")
    plots = _flag(output, "plots", "output", problems)

    if problems:
        raise ConfigError(problems, source)

    config = RunConfig(
        experiment=experiment,
        seed=seed,
        workers=workers,
        s=s,
        c=c,
        kernel=kernel,
        model=model,
        picard=picard,
        agents=agents,
        law=law,
        law_agents=law_agents,
        certificate=certificate,
        meanfield=meanfield,
        sweep=sweep,
        output_dir=out_dir,
        plots=plots,
        source=source,
    )
    if c is not None and kernel is not None and (agents or law_agents):
        try:
            config.sim_config()
        except ParameterError as exc:
            raise ConfigError([f"model: {p}" for p in str(exc).split("; ")], source) from exc
    logging.debug("Loaded %s run file from %s", experiment, source or "<mapping>")
    return config


def merge_overrides(raw: dict, overrides: dict) -> dict:
    """Nested copy of `raw` with `overrides` laid over it (mappings merge, everything else replaces)."""
    out = dict(raw)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge_overrides(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """
    Read and validate a YAML run file.

    Parameters:
        path: Run file
        overrides: Values laid over the file before validation (command-line flags)

    Raises:
        ConfigError: Missing file, YAML syntax error (with line and column) or semantic violations
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError([f"run file not found: {path}"], str(path)) from None
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark is not None else "unknown position"
        raise ConfigError([f"YAML syntax error at {where}: {exc.problem or exc}"], str(path)) from exc
    except yaml.YAMLError as exc:
        raise ConfigError([f"YAML syntax error: {exc}"], str(path)) from exc
    if overrides:
        raw = merge_overrides(raw if isinstance(raw, dict) else {}, overrides)
    return parse_config(raw, str(path))
