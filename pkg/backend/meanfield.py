"""
Atomic trajectory ensembles and exact transport distances between them.

An N-particle run is an equal-weight atomic measure on trajectory space. Two
ensembles are compared with the sup-norm ground cost

    |gamma - xi| = sup_{t <= T} |gamma(t) - xi(t)| + sup_{0 <= t <= T} |gamma'(t) - xi'(t)|

and the Monge-Kantorovich-Rubinstein distance, computed exactly by replicating
both ensembles to lcm(N, M) atoms and solving the assignment problem.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from backend.dynamics import SimConfig, SimulationResult, simulate
from backend.history import (
    ConstantVelocity,
    HistoryBundle,
    InitialSegment,
    PiecewiseLinearVelocity,
    TrajectoryHistory,
    check_lipschitz,
    sup_norm_diff,
)
from utils.errors import ParameterError, UsageError
from utils.parallel import ordered_map

POSITION_KINDS = ("point", "box", "ball")
VELOCITY_KINDS = ("point", "ball")
TAIL_FREE = "free"
TAIL_SHARED = "shared"


@dataclass
class StudyResult:
    """Study table plus the invariant-check totals of every run behind it."""

    table: pd.DataFrame
    checked: int = 0
    failed: int = 0
    first_failure: str | None = None

    @classmethod
    def from_runs(cls, table: pd.DataFrame, results: list[SimulationResult]) -> "StudyResult":
        failures = [r.ledger.first_failure for r in results if r.ledger.failed]
        return cls(
            table,
            checked=sum(r.ledger.checked for r in results),
            failed=sum(r.ledger.failed for r in results),
            first_failure=failures[0] if failures else None,
        )


@dataclass(frozen=True)
class InitialLaw:
    """
    Sampler of constant-velocity (or shared-tail) initial paths.

    Atom i is drawn from its own stream SeedSequence(seed, spawn_key=(i,)), so the
    first N atoms of a larger sample equal a sample of size N.
    """

    dim: int
    speed_bound: float
    position_kind: str = "box"
    position_center: tuple[float, ...] = ()
    position_radius: float = 1.0
    velocity_kind: str = "ball"
    velocity_center: tuple[float, ...] = ()
    velocity_radius: float = 0.5
    tail: str = TAIL_FREE
    tail_velocity: tuple[float, ...] = ()
    ramp: float = 1.0
    seed: int = 0

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ParameterError("; ".join(problems))

    def violations(self) -> list[str]:
        problems = []
        if self.dim < 1:
            problems.append(f"law dimension must be >= 1, got {self.dim}")
        if not self.speed_bound > 0.0:
            problems.append(f"law speed bound must be > 0, got {self.speed_bound}")
        if self.position_kind not in POSITION_KINDS:
            problems.append(f"position kind must be one of {POSITION_KINDS}, got {self.position_kind!r}")
        if self.velocity_kind not in VELOCITY_KINDS:
            problems.append(f"velocity kind must be one of {VELOCITY_KINDS}, got {self.velocity_kind!r}")
        if self.position_radius < 0.0 or self.velocity_radius < 0.0:
            problems.append("law radii must be >= 0")
        for name, vec in (("position center", self.position_center), ("velocity center", self.velocity_center)):
            if vec and len(vec) != self.dim:
                problems.append(f"{name} must have {self.dim} components, got {len(vec)}")
        if self.tail not in (TAIL_FREE, TAIL_SHARED):
            problems.append(f"tail must be '{TAIL_FREE}' or '{TAIL_SHARED}', got {self.tail!r}")
        if self.tail == TAIL_SHARED:
            if self.tail_velocity and len(self.tail_velocity) != self.dim:
                problems.append(f"tail velocity must have {self.dim} components")
            elif np.linalg.norm(self._tail_velocity) > self.speed_bound:
                problems.append(f"tail velocity exceeds the speed bound {self.speed_bound}")
            if not self.ramp > 0.0:
                problems.append(f"ramp must be > 0, got {self.ramp}")
        return problems

    @property
    def _tail_velocity(self) -> np.ndarray:
        return np.asarray(self.tail_velocity, dtype=float) if self.tail_velocity else np.zeros(self.dim)

    def _center(self, vec) -> np.ndarray:
        return np.asarray(vec, dtype=float) if vec else np.zeros(self.dim)

    def _ball(self, rng: np.random.Generator, center, radius) -> np.ndarray:
        if radius == 0.0:
            return center.copy()
        direction = rng.normal(size=self.dim)
        norm = np.linalg.norm(direction)
        direction = direction / norm if norm > 0.0 else np.eye(self.dim)[0]
        return center + radius * rng.uniform() ** (1.0 / self.dim) * direction

    def sample_atom(self, index: int) -> InitialSegment:
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(index,)))
        center = self._center(self.position_center)
        if self.position_kind == "point":
            x = center.copy()
        elif self.position_kind == "box":
            x = center + self.position_radius * rng.uniform(-1.0, 1.0, size=self.dim)
        else:
            x = self._ball(rng, center, self.position_radius)
        vcenter = self._center(self.velocity_center)
        v = vcenter.copy() if self.velocity_kind == "point" else self._ball(rng, vcenter, self.velocity_radius)
        speed = np.linalg.norm(v)
        if speed > self.speed_bound:
            v = v * (self.speed_bound / speed)
        if self.tail == TAIL_SHARED:
            return PiecewiseLinearVelocity([(-self.ramp, self._tail_velocity), (0.0, v)], x)
        return ConstantVelocity(x, v)


@dataclass
class TrajectoryEnsemble:
    atoms: list[TrajectoryHistory]
    horizon: float
    init_window: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def segments(self) -> list[InitialSegment]:
        return [atom.init for atom in self.atoms]

    def restrict(self) -> "TrajectoryEnsemble":
        """The initial paths only (t <= 0)."""
        bundle = HistoryBundle(self.segments, self.atoms[0].s_bound, window=self.init_window)
        return TrajectoryEnsemble([bundle.agent(i) for i in range(self.n_atoms)], 0.0, self.init_window)

    def check_membership(self) -> dict:
        """s-Lipschitz positions and 2s-Lipschitz velocities for every atom, at knot level."""
        reports = [check_lipschitz(atom) for atom in self.atoms]
        return {
            "atoms": len(reports),
            "failed": sum(not r["holds"] for r in reports),
            "worst_position_excess": max(r["position_excess"] for r in reports),
            "worst_velocity_excess": max(r["velocity_excess"] for r in reports),
        }


def sample_initial_ensemble(law: InitialLaw, n: int) -> TrajectoryEnsemble:
    if n < 1:
        raise ParameterError(f"ensemble size must be >= 1, got {n}")
    segments = [law.sample_atom(i) for i in range(n)]
    bundle = HistoryBundle(segments, law.speed_bound)
    return TrajectoryEnsemble([bundle.agent(i) for i in range(n)], 0.0, None, {"seed": law.seed})


def ensemble_from_result(result: SimulationResult) -> TrajectoryEnsemble:
    """Wrap an N-particle run as an N-atom ensemble (each agent is one atom)."""
    bundle = result.bundle
    return TrajectoryEnsemble(
        [bundle.agent(i) for i in range(bundle.n_agents)], result.state.t, result.window, {"steps": result.steps}
    )


def _initial_gap(a: InitialSegment, b: InitialSegment, s_bound: float) -> tuple[float, float]:
    """Sup over t <= 0 of |a(t) - b(t)| (inf when the constant tails drift apart) and its grid bound."""
    if np.any(a.tail_velocity != b.tail_velocity):
        return math.inf, 0.0
    t_lo = min(a.tail_time, b.tail_time, 0.0)
    knots = np.unique(np.concatenate([[t_lo, 0.0], a.knot_times, b.knot_times]))
    knots = knots[knots >= t_lo]
    grid = np.sort(np.concatenate([knots, 0.5 * (knots[:-1] + knots[1:])]))
    gap = np.linalg.norm(a.position(grid) - b.position(grid), axis=1)
    h = float(np.max(np.diff(knots))) if knots.size > 1 else 0.0
    return float(gap.max()), 2.0 * s_bound * h


def pair_cost(a: TrajectoryHistory, b: TrajectoryHistory, horizon: float) -> tuple[float, float]:
    """(norm distance, grid error bound) between two atoms on (-inf, horizon]."""
    tail, tail_bound = _initial_gap(a.init, b.init, max(a.s_bound, b.s_bound))
    if not math.isfinite(tail):
        return math.inf, 0.0
    if horizon <= 0.0:
        return tail, tail_bound
    diff = sup_norm_diff(a, b, (0.0, horizon))
    return max(tail, diff.pos_sup) + diff.vel_sup, max(tail_bound, diff.pos_error_bound) + diff.vel_error_bound


def _check_horizons(e1: TrajectoryEnsemble, e2: TrajectoryEnsemble):
    if not math.isclose(e1.horizon, e2.horizon, rel_tol=1e-12, abs_tol=1e-12):
        raise UsageError(f"ensembles have different horizons ({e1.horizon} vs {e2.horizon})")


def ensemble_norm_distance(e1: TrajectoryEnsemble, e2: TrajectoryEnsemble, i: int, j: int) -> float:
    """Trajectory-norm distance between atom i of e1 and atom j of e2 (inf if the tails drift apart)."""
    _check_horizons(e1, e2)
    value, _ = pair_cost(e1.atoms[i], e2.atoms[j], e1.horizon)
    return value


def cost_matrix(e1: TrajectoryEnsemble, e2: TrajectoryEnsemble) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise atom costs and their grid error bounds, shape (N, M)."""
    _check_horizons(e1, e2)
    C = np.empty((e1.n_atoms, e2.n_atoms))
    E = np.empty_like(C)
    for i, a in enumerate(e1.atoms):
        for j, b in enumerate(e2.atoms):
            C[i, j], E[i, j] = pair_cost(a, b, e1.horizon)
    return C, E


@dataclass(frozen=True)
class TransportResult:
    value: float
    error_bound: float
    replicated_size: int
    rows: np.ndarray
    cols: np.ndarray


def assignment_transport(C: np.ndarray, E: np.ndarray | None = None) -> TransportResult:
    """
    Exact optimal transport between uniform weights on the rows and on the columns of C.

    Both sides are replicated to L = lcm(N, M) atoms of weight 1/L, then the L x L
    assignment problem is solved (O(L^3)).
    """
    n, m = C.shape
    bad = np.argwhere(~np.isfinite(C))
    if bad.size:
        i, j = (int(k) for k in bad[0])
        raise UsageError(f"infinite cost between atoms ({i}, {j}): their constant initial-velocity tails differ")
    size = math.lcm(n, m)
    big = np.repeat(np.repeat(C, size // n, axis=0), size // m, axis=1)
    rows, cols = linear_sum_assignment(big)
    value = float(big[rows, cols].sum() / size)
    bound = 0.0
    if E is not None:
        big_e = np.repeat(np.repeat(E, size // n, axis=0), size // m, axis=1)
        bound = float(big_e[rows, cols].sum() / size)
    return TransportResult(value, bound, size, rows, cols)


def mkr_transport(e1: TrajectoryEnsemble, e2: TrajectoryEnsemble) -> TransportResult:
    C, E = cost_matrix(e1, e2)
    return assignment_transport(C, E)


def mkr_distance(e1: TrajectoryEnsemble, e2: TrajectoryEnsemble) -> float:
    """Monge-Kantorovich-Rubinstein distance between two equal-weight atomic ensembles."""
    return mkr_transport(e1, e2).value


def _run_ensemble(job) -> SimulationResult:
    config, segments = job
    return simulate(config, segments)


def _simulate_many(config: SimConfig, initial_sets: list[list[InitialSegment]], workers: int) -> list[SimulationResult]:
    jobs = [(replace(config, n_agents=len(segs)), segs) for segs in initial_sets]
    return ordered_map(_run_ensemble, jobs, workers)


def particle_convergence_study(law: InitialLaw, n_list, config: SimConfig, workers: int = 1) -> StudyResult:
    """
    Consecutive transport distances of nested N-particle runs.

    Returns:
        StudyResult: table N, N_next, W0, WT, ratio (WT/W0), WT_error_bound and the runs' check totals
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 2 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise UsageError(f"N list must be increasing with at least two entries, got {n_list}")
    initial_sets = [sample_initial_ensemble(law, n).segments for n in n_list]
    results = _simulate_many(config, initial_sets, workers)
    ensembles = [ensemble_from_result(r) for r in results]

    rows = []
    for (n, e_n), (n_next, e_next) in zip(zip(n_list, ensembles), zip(n_list[1:], ensembles[1:])):
        w0 = mkr_distance(e_n.restrict(), e_next.restrict())
        wt = mkr_transport(e_n, e_next)
        rows.append(
            {
                "N": n,
                "N_next": n_next,
                "W0": w0,
                "WT": wt.value,
                "ratio": wt.value / w0 if w0 > 0.0 else math.nan,
                "WT_error_bound": wt.error_bound,
            }
        )
        logging.info("N=%d vs %d: W0=%.4g WT=%.4g", n, n_next, w0, wt.value)
    return StudyResult.from_runs(pd.DataFrame(rows), results)


def perturbation_study(law: InitialLaw, n: int, deltas, config: SimConfig, workers: int = 1) -> StudyResult:
    """
    Stability proxy: shift every atom's initial path by delta times a random unit vector
    and compare the transport distance at T with the one at t = 0.

    Returns:
        StudyResult: table delta, W0, WT, ratio and the runs' check totals
    """
    base = sample_initial_ensemble(law, n).segments
    rng = np.random.default_rng(np.random.SeedSequence(law.seed, spawn_key=(n, 1)))
    directions = rng.normal(size=(n, law.dim))
    directions /= np.maximum(np.linalg.norm(directions, axis=1, keepdims=True), 1e-300)
    deltas = [float(d) for d in deltas]
    initial_sets = [base] + [[seg.shifted(d * u) for seg, u in zip(base, directions)] for d in deltas]
    results = _simulate_many(config, initial_sets, workers)
    reference = ensemble_from_result(results[0])

    rows = []
    for delta, result in zip(deltas, results[1:]):
        moved = ensemble_from_result(result)
        w0 = mkr_distance(reference.restrict(), moved.restrict())
        wt = mkr_distance(reference, moved)
        rows.append({"delta": delta, "W0": w0, "WT": wt, "ratio": wt / w0 if w0 > 0.0 else math.nan})
        logging.info("delta=%g: W0=%.4g WT=%.4g", delta, w0, wt)
    return StudyResult.from_runs(pd.DataFrame(rows), results)
