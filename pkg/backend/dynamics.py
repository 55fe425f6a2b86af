"""
Right-hand side and time stepping of the finite-speed Cucker-Smale system.

    x_i' = v_i
    v_i' = 1/(N-1) * sum_{j != i} psi(|x_ret_ij - x_i|) (v_ret_ij - v_i)

where (x_ret_ij, v_ret_ij) is agent j's state at the retarded time t - tau_ij.
Production stepping is classical RK4 with dense history; stages that look
into the step being computed read a predicted segment that is corrected once.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from backend.delay import PairDelays, instantaneous_pair_delays, pair_delays_at
from backend.diagnostics import observe, series_frame
from backend.history import HistoryBundle, InitialSegment, required_window
from backend.influence import InfluenceFunction
from utils.constants import DELAY_BOUND_SLACK, PICARD_GRID, PICARD_MAX_ITERS, PICARD_TOL, SPEED_SLACK
from utils.errors import InvariantViolationError, ParameterError

SCHEME_RK4 = "rk4"
SCHEME_PICARD = "picard"
SCHEMES = (SCHEME_RK4, SCHEME_PICARD)

DELAY_FINITE = "finite"
DELAY_INSTANTANEOUS = "instantaneous"
DELAY_MODELS = (DELAY_FINITE, DELAY_INSTANTANEOUS)


@dataclass(frozen=True)
class PicardConfig:
    """Band m (s < m < c), window length, iteration cap, fixed-point tolerance, grid intervals per window."""

    m: float
    t_step: float
    max_iters: int = PICARD_MAX_ITERS
    tol: float = PICARD_TOL
    grid: int = PICARD_GRID

    def violations(self, c: float, s: float) -> list[str]:
        problems = []
        if not (s < self.m < c):
            problems.append(f"picard band m={self.m} must satisfy s < m < c (s={s}, c={c})")
        if not (math.isfinite(self.t_step) and self.t_step > 0.0):
            problems.append(f"picard t_step must be > 0, got {self.t_step}")
        if self.max_iters < 1:
            problems.append(f"picard max_iters must be >= 1, got {self.max_iters}")
        if not self.tol > 0.0:
            problems.append(f"picard tol must be > 0, got {self.tol}")
        if self.grid < 1:
            problems.append(f"picard grid must be >= 1, got {self.grid}")
        return problems


@dataclass(frozen=True)
class SimConfig:
    n_agents: int
    dim: int
    c: float
    s: float
    kernel: InfluenceFunction
    dt: float
    horizon: float
    sample_every: int = 1
    scheme: str = SCHEME_RK4
    delay_model: str = DELAY_FINITE
    meanfield_rescale: bool = False
    prune_history: bool = False
    init_window: float | None = None
    speed_slack: float = SPEED_SLACK
    picard: PicardConfig | None = None

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ParameterError("; ".join(problems))

    def violations(self) -> list[str]:
        problems = []
        if self.n_agents < 1:
            problems.append(f"N must be >= 1, got {self.n_agents}")
        if self.dim < 1:
            problems.append(f"dimension must be >= 1, got {self.dim}")
        if not (math.isfinite(self.s) and self.s > 0.0):
            problems.append(f"speed bound s must be finite and > 0, got {self.s}")
        if not (self.c > self.s):
            problems.append(f"c={self.c} must exceed s={self.s}: the agents travel slower than c")
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            problems.append(f"dt must be finite and > 0, got {self.dt}")
        if not (math.isfinite(self.horizon) and self.horizon >= 0.0):
            problems.append(f"horizon must be finite and >= 0, got {self.horizon}")
        elif 0.0 < self.horizon < self.dt:
            problems.append(f"horizon {self.horizon} is shorter than one step dt={self.dt}")
        if self.sample_every < 1:
            problems.append(f"sample_every must be >= 1, got {self.sample_every}")
        if self.scheme not in SCHEMES:
            problems.append(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.delay_model not in DELAY_MODELS:
            problems.append(f"delay_model must be one of {DELAY_MODELS}, got {self.delay_model!r}")
        if self.init_window is not None and not self.init_window >= 0.0:
            problems.append(f"init_window must be >= 0, got {self.init_window}")
        if self.scheme == SCHEME_PICARD:
            if self.picard is None:
                problems.append("scheme 'picard' needs a picard block {m, t_step}")
            else:
                problems.extend(self.picard.violations(self.c, self.s))
            if self.delay_model != DELAY_FINITE:
                problems.append("scheme 'picard' integrates the finite-speed model only")
        return problems

    @property
    def finite_speed(self) -> bool:
        return self.delay_model == DELAY_FINITE

    @property
    def coupling(self) -> float:
        """Prefactor of the interaction sum: 1/(N-1), or 1/N under meanfield_rescale."""
        if self.n_agents < 2:
            return 0.0
        return 1.0 / self.n_agents if self.meanfield_rescale else 1.0 / (self.n_agents - 1)

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.horizon / self.dt - 1e-9)) if self.horizon > 0.0 else 0

    def step_time(self, k: int) -> float:
        """Knot time of step k; computed from k, not accumulated, so runs with one dt share knot times."""
        return min(k * self.dt, self.horizon)


@dataclass(frozen=True)
class SimState:
    t: float
    x: np.ndarray
    v: np.ndarray

    @property
    def n_agents(self) -> int:
        return int(self.x.shape[0])

    @property
    def dim(self) -> int:
        return int(self.x.shape[1])

    @property
    def velocity_radius(self) -> float:
        return float(np.max(np.linalg.norm(self.v, axis=1)))

    @property
    def spatial_diameter(self) -> float:
        return spatial_diameter(self.x)


def spatial_diameter(X: np.ndarray) -> float:
    if X.shape[0] < 2:
        return 0.0
    return float(np.max(np.linalg.norm(X[:, None, :] - X[None, :, :], axis=2)))


def interaction(delays: PairDelays, X: np.ndarray, V: np.ndarray, kernel: InfluenceFunction, coupling: float) -> np.ndarray:
    """Accelerations from retarded samples seen by observers at (X, V)."""
    if X.shape[0] < 2:
        return np.zeros_like(V)
    dist = np.linalg.norm(delays.x_ret - X[:, None, :], axis=2)
    weights = kernel.values(dist)
    np.fill_diagonal(weights, 0.0)
    return coupling * np.einsum("ij,ijd->id", weights, delays.v_ret - V[:, None, :])


def rhs(state: SimState, bundle: HistoryBundle, config: SimConfig) -> np.ndarray:
    """
    Accelerations of all agents at the state's time.

    Returns:
        np.ndarray: (N, d) array; zero for a single agent
    """
    acc, _ = _accelerations(state.t, state.x, state.v, bundle, config)
    return acc


def classical_rhs(x: np.ndarray, v: np.ndarray, kernel: InfluenceFunction, coupling: float) -> np.ndarray:
    """Instantaneous (c = infinity) Cucker-Smale accelerations."""
    return interaction(instantaneous_pair_delays(0.0, x, v), x, v, kernel, coupling)


def _accelerations(t, X, V, bundle, config) -> tuple[np.ndarray, PairDelays]:
    if config.finite_speed:
        delays = pair_delays_at(bundle, t, X, V, config.c)
    else:
        delays = instantaneous_pair_delays(t, X, V)
    return interaction(delays, X, V, config.kernel, config.coupling), delays


@dataclass
class InvariantLedger:
    """Per-step delay-bound and speed-bound checks of a run."""

    delay_checks: int = 0
    delay_failures: int = 0
    worst_delay_margin: float = -math.inf
    speed_checks: int = 0
    speed_failures: int = 0
    max_speed: float = 0.0
    corrected_steps: int = 0
    max_delay_iterations: int = 0
    first_failure: str | None = None

    def record_delays(self, delays: PairDelays, dX: float, c: float, s: float) -> None:
        if delays.n_agents < 2:
            return
        self.record_delay_bound(delays.t, delays.max_tau, dX, c, s, int(delays.iterations.max()))

    def record_delay_bound(self, t: float, max_tau: float, dX: float, c: float, s: float, iterations: int = 0) -> None:
        """max tau <= dX / (c - s) + 1e-10 at time t."""
        bound = dX / (c - s) + DELAY_BOUND_SLACK
        margin = max_tau - bound
        self.delay_checks += 1
        self.worst_delay_margin = max(self.worst_delay_margin, margin)
        self.max_delay_iterations = max(self.max_delay_iterations, iterations)
        if margin > 0.0:
            self.delay_failures += 1
            if self.first_failure is None:
                self.first_failure = f"delay bound exceeded at t={t:.12g} by {margin:.3g}"
            logging.warning("Delay bound exceeded at t=%.6g: max tau %.12g > %.12g", t, max_tau, bound)

    def record_speeds(self, t: float, V: np.ndarray, s: float, slack: float) -> bool:
        speed = float(np.max(np.linalg.norm(V, axis=1)))
        self.speed_checks += 1
        self.max_speed = max(self.max_speed, speed)
        if speed > s + slack:
            self.speed_failures += 1
            if self.first_failure is None:
                self.first_failure = f"speed {speed:.15g} > s={s:.15g} at t={t:.12g}"
            return False
        return True

    @property
    def checked(self) -> int:
        return self.delay_checks + self.speed_checks

    @property
    def failed(self) -> int:
        return self.delay_failures + self.speed_failures

    def as_dict(self) -> dict:
        return {
            "delay_bound": {
                "checked": self.delay_checks,
                "failed": self.delay_failures,
                "worst_margin": self.worst_delay_margin if self.delay_checks else None,
            },
            "speed_bound": {"checked": self.speed_checks, "failed": self.speed_failures, "max_speed": self.max_speed},
            "corrected_steps": self.corrected_steps,
            "max_delay_iterations": self.max_delay_iterations,
            "first_failure": self.first_failure,
        }


def _rk4_stages(t, dt, X, V, A1, bundle, config):
    h = 0.5 * dt
    X2 = X + h * V
    V2 = V + h * A1
    A2, _ = _accelerations(t + h, X2, V2, bundle, config)
    X3 = X + h * V2
    V3 = V + h * A2
    A3, _ = _accelerations(t + h, X3, V3, bundle, config)
    X4 = X + dt * V3
    V4 = V + dt * A3
    A4, _ = _accelerations(t + dt, X4, V4, bundle, config)
    X_new = X + (dt / 6.0) * (V + 2.0 * V2 + 2.0 * V3 + V4)
    V_new = V + (dt / 6.0) * (A1 + 2.0 * A2 + 2.0 * A3 + A4)
    return X_new, V_new


def step_rk4(
    state: SimState,
    bundle: HistoryBundle,
    config: SimConfig,
    dt: float | None = None,
    ledger: InvariantLedger | None = None,
) -> SimState:
    """
    Advance all agents by one RK4 step and append the new knot to the bundle.

    Stage lookups past the current time read a Taylor-predicted segment
    x + v dt + a dt^2/2; if any lookup hit it, the stages are rerun once against
    the RK4-predicted end state.
    """
    dt = config.dt if dt is None else float(dt)
    t, X, V = state.t, state.x, state.v
    A1, delays = _accelerations(t, X, V, bundle, config)
    if ledger is not None and config.finite_speed:
        ledger.record_delays(delays, spatial_diameter(X), config.c, config.s)

    t_new = t + dt
    if config.finite_speed:
        bundle.set_provisional(t_new, X + dt * V + 0.5 * dt * dt * A1, V + dt * A1)
    hits = bundle.provisional_hits
    try:
        X_new, V_new = _rk4_stages(t, dt, X, V, A1, bundle, config)
        if config.finite_speed and bundle.provisional_hits > hits:
            bundle.set_provisional(t_new, X_new, V_new)
            X_new, V_new = _rk4_stages(t, dt, X, V, A1, bundle, config)
            if ledger is not None:
                ledger.corrected_steps += 1
    finally:
        bundle.clear_provisional()

    if ledger is not None:
        ledger.record_speeds(t_new, V_new, config.s, config.speed_slack)
    speed = float(np.max(np.linalg.norm(V_new, axis=1)))
    if speed > config.s + config.speed_slack:
        raise InvariantViolationError(f"speed {speed:.15g} exceeds s={config.s:.15g} at t={t_new:.12g}; reduce dt")
    bundle.append(t_new, X_new, V_new)
    return SimState(t_new, bundle.current_positions.copy(), bundle.current_velocities.copy())


@dataclass
class SimulationResult:
    config: SimConfig
    bundle: HistoryBundle
    state: SimState
    diagnostics: pd.DataFrame
    ledger: InvariantLedger
    steps: int
    window: float | None
    wall_time: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def invariant_failures(self) -> int:
        return self.ledger.failed

    def summary(self) -> dict:
        return {
            "steps": self.steps,
            "t_final": self.state.t,
            "init_window": self.window,
            "provisional_lookups": self.bundle.provisional_hits,
            "invariants": self.ledger.as_dict(),
            "final": {"dX": self.state.spatial_diameter, "Rv": self.state.velocity_radius},
            **self.extras,
        }


def build_bundle(config: SimConfig, segments: list[InitialSegment]) -> HistoryBundle:
    """History bundle for the initial data, with the look-back window S(T) unless overridden."""
    if len(segments) != config.n_agents:
        raise ParameterError(f"config expects N={config.n_agents} agents, initial data has {len(segments)}")
    if any(seg.dim != config.dim for seg in segments):
        raise ParameterError(f"initial data must live in dimension d={config.dim}")
    window = config.init_window
    if window is None and config.finite_speed:
        X0 = np.stack([seg.x_at_zero for seg in segments])
        window = required_window(spatial_diameter(X0), config.c, config.s, config.horizon)
    return HistoryBundle(segments, config.s, window=window, speed_slack=config.speed_slack)


def observe_state(state: SimState, bundle: HistoryBundle, config: SimConfig) -> tuple[dict, PairDelays]:
    """One diagnostics row at the state's (stored) time."""
    if config.finite_speed:
        delays = pair_delays_at(bundle, state.t, state.x, state.v, config.c)
    else:
        delays = instantaneous_pair_delays(state.t, state.x, state.v)
    return observe(state, delays, config.kernel), delays


def _prune(bundle: HistoryBundle, config: SimConfig, t: float, max_dX: float) -> None:
    if not (config.prune_history and config.finite_speed):
        return
    margin = max_dX / (config.c - config.s) * (1.0 + 1e-6) + 2.0 * config.dt
    if t - margin > 0.0:
        bundle.prune(t - margin)


def simulate(config: SimConfig, segments: list[InitialSegment]) -> SimulationResult:
    """
    Integrate from t = 0 to the horizon.

    Diagnostics are sampled at t = 0, every `sample_every` steps and at the
    horizon. Every accepted step passes through the invariant ledger.
    """
    started = time.perf_counter()
    bundle = build_bundle(config, segments)
    state = SimState(0.0, bundle.current_positions.copy(), bundle.current_velocities.copy())
    ledger = InvariantLedger()
    ledger.record_speeds(0.0, state.v, config.s, config.speed_slack)
    row, _ = observe_state(state, bundle, config)
    rows = [row]

    if config.scheme == SCHEME_PICARD:
        from backend.picard import advance_picard

        state, steps, picard_rows = advance_picard(state, bundle, config, ledger)
        rows.extend(picard_rows)
        extras = {"scheme": SCHEME_PICARD}
    else:
        steps = config.n_steps
        max_dX = state.spatial_diameter
        report_every = max(1, steps // 10)
        for k in range(1, steps + 1):
            dt = config.step_time(k) - config.step_time(k - 1)
            state = step_rk4(state, bundle, config, dt=dt, ledger=ledger)
            max_dX = max(max_dX, state.spatial_diameter)
            if k % config.sample_every == 0 or k == steps:
                row, _ = observe_state(state, bundle, config)
                rows.append(row)
            _prune(bundle, config, state.t, max_dX)
            if k % report_every == 0:
                logging.info("t=%.4g / %.4g (step %d of %d), dV=%.3e", state.t, config.horizon, k, steps, rows[-1]["dV"])
        extras = {"scheme": SCHEME_RK4}

    result = SimulationResult(
        config=config,
        bundle=bundle,
        state=state,
        diagnostics=series_frame(rows),
        ledger=ledger,
        steps=steps,
        window=bundle.window,
        wall_time=time.perf_counter() - started,
        extras=extras,
    )
    if ledger.failed:
        logging.warning("Run finished with %d invariant failures: %s", ledger.failed, ledger.first_failure)
    return result


def trajectory_distance(a: SimulationResult, b: SimulationResult) -> dict:
    """Sup-norm distance of positions and velocities over the knot times both runs share."""
    ta, tb = a.bundle.knot_times, b.bundle.knot_times
    common, ia, ib = np.intersect1d(ta, tb, assume_unique=True, return_indices=True)
    if common.size == 0:
        raise ParameterError("runs share no knot times")
    if a.bundle.n_agents != b.bundle.n_agents:
        raise ParameterError("runs have different agent counts")
    dx = np.linalg.norm(a.bundle.positions[ia] - b.bundle.positions[ib], axis=2)
    dv = np.linalg.norm(a.bundle.velocities[ia] - b.bundle.velocities[ib], axis=2)
    return {
        "pos_sup": float(dx.max()),
        "vel_sup": float(dv.max()),
        "total": float(dx.max() + dv.max()),
        "common_knots": int(common.size),
    }


def _final_state_gap(a: SimulationResult, b: SimulationResult) -> float:
    return float(max(np.max(np.abs(a.state.x - b.state.x)), np.max(np.abs(a.state.v - b.state.v))))


def richardson_order(config: SimConfig, segments: list[InitialSegment], dts: tuple[float, ...] | None = None) -> dict:
    """
    Observed global order from runs at dt, dt/2, dt/4.

    order = log2(|y(dt) - y(dt/2)| / |y(dt/2) - y(dt/4)|) on the final state.
    """
    dts = dts or (config.dt, config.dt / 2.0, config.dt / 4.0)
    if len(dts) != 3:
        raise ParameterError("richardson_order needs exactly three step sizes")
    runs = [simulate(replace(config, dt=dt), segments) for dt in dts]
    coarse = _final_state_gap(runs[0], runs[1])
    fine = _final_state_gap(runs[1], runs[2])
    if fine == 0.0:
        ratio = math.inf if coarse > 0.0 else math.nan
    else:
        ratio = coarse / fine
    order = math.log(ratio, dts[0] / dts[1]) if ratio > 0.0 and math.isfinite(ratio) else math.nan
    logging.info("Richardson triplet %s: differences %.3e, %.3e, observed order %.3f", dts, coarse, fine, order)
    return {
        "dts": list(dts),
        "differences": [coarse, fine],
        "ratio": ratio,
        "order": order,
        "ledger_checked": sum(r.ledger.checked for r in runs),
        "ledger_failures": sum(r.ledger.failed for r in runs),
    }
