"""
Agent trajectory histories with dense output at arbitrary past times.

Every agent of a simulation is integrated on the same knot times, so the knots of
all N agents are stored together in a HistoryBundle (t[K], X[K,N,d], V[K,N,d]).
A TrajectoryHistory is the single-agent view of a bundle; standalone single-agent
histories are simply one-agent bundles.

Dense output:
  - t <= 0: closed-form initial segment (constant or piecewise-linear velocity,
    positions obtained by integrating the velocity back from x(0));
  - 0 <= t <= t_now: cubic Hermite positions (stored velocities are the
    derivatives), linear velocities;
  - t_now < t <= t_provisional: same interpolation against the provisional
    (predicted) knot of the step being computed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from utils.constants import APPEND_SPEED_SLACK, COL_AGENT, COL_T, LIPSCHITZ_SLACK
from utils.errors import HistoryUnderflowError, InvariantViolationError, ParameterError, UsageError

# Relative slack on the window edges (roundoff in stage times and retarded times)
_EDGE_TOL = 1e-9


class InitialSegment:
    """
    Prescribed past of one agent on (-inf, 0], given by its velocity and x(0).

    The velocity is piecewise linear through (time, velocity) knots with flat
    extrapolation before the first knot and after the last one; positions follow
    from x(t) = x(0) - integral_t^0 v.
    """

    def __init__(self, times, velocities, x_at_zero):
        times = np.asarray(times, dtype=float).reshape(-1)
        velocities = np.asarray(velocities, dtype=float)
        x_at_zero = np.asarray(x_at_zero, dtype=float).reshape(-1)
        if velocities.ndim == 1:
            velocities = velocities.reshape(1, -1)
        if x_at_zero.size < 1:
            raise ParameterError("initial segment needs a position with dim >= 1")
        if velocities.shape != (times.size, x_at_zero.size):
            raise ParameterError(
                f"initial segment velocities have shape {velocities.shape}, expected {(times.size, x_at_zero.size)}"
            )
        if times.size == 0 or not np.all(np.isfinite(times)) or np.any(times > 0.0):
            raise ParameterError("initial velocity knots must be finite times <= 0")
        if np.any(np.diff(times) <= 0.0):
            raise ParameterError("initial velocity knot times must be strictly increasing")
        if times[-1] < 0.0:
            times = np.append(times, 0.0)
            velocities = np.vstack([velocities, velocities[-1]])
        self._t = times
        self._v = velocities
        self.x_at_zero = x_at_zero
        # integral of v from knot k to 0 (trapezoid is exact on linear pieces)
        widths = np.diff(times)[:, None]
        pieces = widths * 0.5 * (velocities[:-1] + velocities[1:])
        cum = np.zeros_like(velocities)
        if len(pieces):
            cum[:-1] = np.cumsum(pieces[::-1], axis=0)[::-1]
        self._cum = cum

    @property
    def dim(self) -> int:
        return int(self.x_at_zero.size)

    @property
    def knot_times(self) -> np.ndarray:
        return self._t

    @property
    def tail_time(self) -> float:
        """Before this time the velocity is constant."""
        return float(self._t[0])

    @property
    def tail_velocity(self) -> np.ndarray:
        return self._v[0]

    @property
    def max_speed(self) -> float:
        return float(np.max(np.linalg.norm(self._v, axis=1)))

    @property
    def velocity_lipschitz(self) -> float:
        """L_v0: largest knot-to-knot velocity slope (0 for constant velocity)."""
        if self._t.size < 2:
            return 0.0
        slopes = np.linalg.norm(np.diff(self._v, axis=0), axis=1) / np.diff(self._t)
        return float(np.max(slopes))

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self._v == self._v[0]))

    def velocity(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t.size, self.dim))
        for c in range(self.dim):
            out[:, c] = np.interp(t, self._t, self._v[:, c])
        return out

    def position(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.searchsorted(self._t, t, side="right") - 1
        last = self._t.size - 1
        out = np.empty((t.size, self.dim))

        before = k < 0
        if np.any(before):
            lag = (self._t[0] - t[before])[:, None]
            out[before] = self.x_at_zero - self._cum[0] - lag * self._v[0]

        at_end = k >= last
        if np.any(at_end):
            out[at_end] = self.x_at_zero

        inside = ~before & ~at_end
        if np.any(inside):
            kk = k[inside]
            tt = t[inside]
            v_t = self.velocity(tt)
            rest = (self._t[kk + 1] - tt)[:, None] * 0.5 * (v_t + self._v[kk + 1])
            out[inside] = self.x_at_zero - self._cum[kk + 1] - rest
        return out

    def shifted(self, offset) -> "InitialSegment":
        """Same velocities, positions translated by offset."""
        return InitialSegment(self._t, self._v, self.x_at_zero + np.asarray(offset, dtype=float))

    def to_config(self) -> dict:
        if self.is_constant:
            return {"x": self.x_at_zero.tolist(), "v": self._v[0].tolist()}
        return {
            "x": self.x_at_zero.tolist(),
            "v_knots": [[float(t), v.tolist()] for t, v in zip(self._t, self._v)],
        }


class ConstantVelocity(InitialSegment):
    """x(t) = x0 + v0 t for t <= 0."""

    def __init__(self, x0, v0):
        v0 = np.asarray(v0, dtype=float).reshape(1, -1)
        super().__init__([0.0], v0, x0)


class PiecewiseLinearVelocity(InitialSegment):
    """Velocity linear between (t <= 0, v) knots; x0_at_zero anchors the positions."""

    def __init__(self, knots, x0_at_zero):
        if not knots:
            raise ParameterError("piecewise-linear initial velocity needs at least one knot")
        times = [float(t) for t, _ in knots]
        vels = [np.asarray(v, dtype=float).reshape(-1) for _, v in knots]
        super().__init__(times, np.vstack(vels), x0_at_zero)


def required_window(dX0: float, c: float, s: float, T: float) -> float:
    """
    Length S(T) of the past that a run to horizon T can look back into.

        S(T) = (dX0 + max(-(c - 3s), 0) T) / (c - s)
    """
    if not c > s:
        raise ParameterError(f"propagation speed c={c} must exceed the speed bound s={s}")
    if s < 0.0 or T < 0.0 or dX0 < 0.0:
        raise ParameterError(f"required_window needs s, T, dX0 >= 0 (got s={s}, T={T}, dX0={dX0})")
    negative_part = max(-(c - 3.0 * s), 0.0)
    return (dX0 + negative_part * T) / (c - s)


def hermite(s, h, x0, v0, x1, v1):
    s2 = s * s
    s3 = s2 * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    return h00 * x0 + (h10 * h) * v0 + h01 * x1 + (h11 * h) * v1


class HistoryBundle:
    """Histories of N agents sharing one knot-time grid on [0, t_now]."""

    def __init__(
        self,
        segments: list[InitialSegment],
        s_bound: float,
        window: float | None = None,
        speed_slack: float = APPEND_SPEED_SLACK,
        capacity: int = 256,
    ):
        if not segments:
            raise ParameterError("a history bundle needs at least one agent")
        dims = {seg.dim for seg in segments}
        if len(dims) != 1:
            raise ParameterError(f"all agents must share one dimension, got {sorted(dims)}")
        if not (math.isfinite(s_bound) and s_bound >= 0.0):
            raise ParameterError(f"speed bound must be finite and >= 0, got {s_bound}")
        self.segments = list(segments)
        self.s_bound = float(s_bound)
        self.window = None if window is None else float(window)
        self.speed_slack = float(speed_slack)
        self._n = len(segments)
        self._d = dims.pop()
        cap = max(int(capacity), 4)
        self._t = np.empty(cap)
        self._x = np.empty((cap, self._n, self._d))
        self._v = np.empty((cap, self._n, self._d))
        self._start = 0
        self._count = 0
        self._prov = None
        self.provisional_hits = 0

        # closed-form fast path when every past is a constant-velocity line
        self._all_constant = all(seg.knot_times.size == 1 for seg in segments)
        self._x0 = np.stack([seg.x_at_zero for seg in segments])
        self._v0 = np.stack([seg.velocity(0.0)[0] for seg in segments])

        for idx, seg in enumerate(segments):
            if seg.max_speed > self.s_bound + self.speed_slack:
                raise InvariantViolationError(
                    f"agent {idx}: initial speed {seg.max_speed:.12g} exceeds s={self.s_bound:.12g}"
                )
        self._store(0.0, self._x0, self._v0)

    # --- shape & state ---

    @property
    def n_agents(self) -> int:
        return self._n

    @property
    def dim(self) -> int:
        return self._d

    @property
    def accel_bound(self) -> float:
        return 2.0 * self.s_bound

    @property
    def t_now(self) -> float:
        return float(self._t[self._count - 1])

    @property
    def knot_times(self) -> np.ndarray:
        return self._t[self._start:self._count]

    @property
    def positions(self) -> np.ndarray:
        return self._x[self._start:self._count]

    @property
    def velocities(self) -> np.ndarray:
        return self._v[self._start:self._count]

    @property
    def is_pruned(self) -> bool:
        return self._start > 0

    @property
    def current_positions(self) -> np.ndarray:
        return self._x[self._count - 1]

    @property
    def current_velocities(self) -> np.ndarray:
        return self._v[self._count - 1]

    def agent(self, index: int) -> "TrajectoryHistory":
        return TrajectoryHistory(self, index)

    # --- mutation ---

    def _store(self, t, X, V):
        if self._count == self._t.size:
            grow = self._t.size
            self._t = np.concatenate([self._t, np.empty(grow)])
            self._x = np.concatenate([self._x, np.empty((grow, self._n, self._d))])
            self._v = np.concatenate([self._v, np.empty((grow, self._n, self._d))])
        self._t[self._count] = t
        self._x[self._count] = X
        self._v[self._count] = V
        self._count += 1

    def append(self, t: float, X, V) -> None:
        """Append one knot for every agent; speeds above s + slack are an invariant violation."""
        X = np.asarray(X, dtype=float).reshape(self._n, self._d)
        V = np.asarray(V, dtype=float).reshape(self._n, self._d)
        if not t > self.t_now:
            raise UsageError(f"history knots must increase in time: t={t!r} after t_now={self.t_now!r}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(V))):
            raise InvariantViolationError(f"non-finite state appended at t={t}")
        speeds = np.linalg.norm(V, axis=1)
        worst = int(np.argmax(speeds))
        if speeds[worst] > self.s_bound + self.speed_slack:
            raise InvariantViolationError(
                f"agent {worst} speed {speeds[worst]:.15g} exceeds s={self.s_bound:.15g} "
                f"(+{self.speed_slack:g}) at t={t:.12g}"
            )
        self._prov = None
        self._store(float(t), X, V)

    def set_provisional(self, t: float, X, V) -> None:
        """Predicted knot at the end of the step in progress; lookups past t_now use it."""
        if not t > self.t_now:
            raise UsageError(f"provisional knot at t={t} must lie after t_now={self.t_now}")
        self._prov = (
            float(t),
            np.asarray(X, dtype=float).reshape(self._n, self._d),
            np.asarray(V, dtype=float).reshape(self._n, self._d),
        )

    def clear_provisional(self) -> None:
        self._prov = None

    def prune(self, keep_from: float) -> int:
        """Drop knots older than keep_from (the knot at or before it stays). Returns the count dropped."""
        times = self.knot_times
        j = int(np.searchsorted(times, keep_from, side="right")) - 1
        j = min(max(j, 0), times.size - 1)
        if j > 0:
            self._start += j
            logging.debug("Pruned %d history knots older than t=%g", j, keep_from)
        return j

    # --- evaluation ---

    def evaluate(self, agents, times) -> tuple[np.ndarray, np.ndarray]:
        """
        Positions and velocities of agents[m] at times[m].

        Parameters:
            agents: Integer array of agent indices (length M)
            times: Array of evaluation times (length M)

        Returns:
            tuple: (X of shape (M, d), V of shape (M, d))
        """
        agents = np.atleast_1d(np.asarray(agents, dtype=np.intp))
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if agents.size == 1 and times.size > 1:
            agents = np.full(times.size, agents[0], dtype=np.intp)
        X = np.empty((times.size, self._d))
        V = np.empty((times.size, self._d))
        if times.size == 0:
            return X, V

        if not np.all(np.isfinite(times)):
            raise UsageError("history evaluated at a non-finite time")
        t_now = self.t_now
        t_first = float(self._t[self._start])
        tol = _EDGE_TOL * max(1.0, abs(t_now))

        if self._prov is not None:
            t_prov = self._prov[0]
            if np.any(times > t_prov + tol):
                raise UsageError(f"history evaluated at t={times.max():.12g} beyond the provisional knot {t_prov:.12g}")
        elif np.any(times > t_now + tol):
            raise UsageError(f"history evaluated at t={times.max():.12g} beyond t_now={t_now:.12g}")

        if self._start > 0 and np.any(times < t_first - tol):
            raise HistoryUnderflowError(
                f"history pruned before t={t_first:.12g}, evaluated at t={times.min():.12g}",
                required_window=t_now - times.min(),
            )

        past = times <= 0.0
        if np.any(past):
            self._evaluate_past(agents[past], times[past], X, V, past)

        future = times > t_now
        if self._prov is not None and np.any(future):
            self._evaluate_provisional(agents[future], times[future], X, V, future)
            self.provisional_hits += int(np.count_nonzero(future))
        elif np.any(future):
            # roundoff just past t_now without a provisional knot
            future_idx = np.flatnonzero(future)
            X[future_idx] = self._x[self._count - 1, agents[future]]
            V[future_idx] = self._v[self._count - 1, agents[future]]

        stored = ~past & ~future
        if np.any(stored):
            self._evaluate_knots(agents[stored], times[stored], X, V, stored)
        return X, V

    def _evaluate_past(self, agents, times, X, V, mask):
        if self.window is not None:
            edge = -self.window * (1.0 + _EDGE_TOL) - _EDGE_TOL
            if np.any(times < edge):
                raise HistoryUnderflowError(
                    f"initial data prescribed on [{-self.window:.12g}, 0] only, evaluated at t={times.min():.12g}",
                    required_window=self.window,
                )
        idx = np.flatnonzero(mask)
        if self._all_constant:
            X[idx] = self._x0[agents] + self._v0[agents] * times[:, None]
            V[idx] = self._v0[agents]
            return
        for a in np.unique(agents):
            sel = agents == a
            seg = self.segments[a]
            X[idx[sel]] = seg.position(times[sel])
            V[idx[sel]] = seg.velocity(times[sel])

    def _evaluate_knots(self, agents, times, X, V, mask):
        idx = np.flatnonzero(mask)
        knots = self.knot_times
        if knots.size == 1:
            X[idx] = self._x[self._start, agents]
            V[idx] = self._v[self._start, agents]
            return
        k = np.searchsorted(knots, times, side="right") - 1
        k = np.clip(k, 0, knots.size - 2)
        t0 = knots[k]
        h = knots[k + 1] - t0
        s = np.clip((times - t0) / h, 0.0, 1.0)[:, None]
        row = self._start + k
        x0 = self._x[row, agents]
        v0 = self._v[row, agents]
        x1 = self._x[row + 1, agents]
        v1 = self._v[row + 1, agents]
        X[idx] = hermite(s, h[:, None], x0, v0, x1, v1)
        V[idx] = (1.0 - s) * v0 + s * v1

    def _evaluate_provisional(self, agents, times, X, V, mask):
        idx = np.flatnonzero(mask)
        t_prov, Xp, Vp = self._prov
        t0 = self.t_now
        h = t_prov - t0
        s = np.clip((times - t0) / h, 0.0, 1.0)[:, None]
        x0 = self._x[self._count - 1, agents]
        v0 = self._v[self._count - 1, agents]
        x1 = Xp[agents]
        v1 = Vp[agents]
        X[idx] = hermite(s, h, x0, v0, x1, v1)
        V[idx] = (1.0 - s) * v0 + s * v1


class TrajectoryHistory:
    """One agent's path on (-inf, t_now]: a view into a HistoryBundle."""

    def __init__(self, bundle: HistoryBundle, agent: int = 0):
        if not 0 <= agent < bundle.n_agents:
            raise UsageError(f"agent index {agent} out of range for {bundle.n_agents} agents")
        self.bundle = bundle
        self.agent = int(agent)

    @classmethod
    def from_initial(
        cls,
        segment: InitialSegment,
        s_bound: float,
        window: float | None = None,
        speed_slack: float = APPEND_SPEED_SLACK,
    ) -> "TrajectoryHistory":
        return cls(HistoryBundle([segment], s_bound, window=window, speed_slack=speed_slack), 0)

    @property
    def dim(self) -> int:
        return self.bundle.dim

    @property
    def s_bound(self) -> float:
        return self.bundle.s_bound

    @property
    def accel_bound(self) -> float:
        return self.bundle.accel_bound

    @property
    def init(self) -> InitialSegment:
        return self.bundle.segments[self.agent]

    @property
    def window(self) -> float | None:
        return self.bundle.window

    @property
    def t_now(self) -> float:
        return self.bundle.t_now

    @property
    def knot_times(self) -> np.ndarray:
        return self.bundle.knot_times

    @property
    def knot_positions(self) -> np.ndarray:
        return self.bundle.positions[:, self.agent]

    @property
    def knot_velocities(self) -> np.ndarray:
        return self.bundle.velocities[:, self.agent]

    def eval_position(self, t):
        scalar = np.ndim(t) == 0
        X, _ = self.bundle.evaluate(self.agent, np.atleast_1d(t))
        return X[0] if scalar else X

    def eval_velocity(self, t):
        scalar = np.ndim(t) == 0
        _, V = self.bundle.evaluate(self.agent, np.atleast_1d(t))
        return V[0] if scalar else V

    def append(self, t: float, x, v) -> "TrajectoryHistory":
        if self.bundle.n_agents != 1:
            raise UsageError("append() on a single agent of a shared bundle; append to the bundle instead")
        self.bundle.append(t, np.reshape(x, (1, -1)), np.reshape(v, (1, -1)))
        return self


def eval_position(h: TrajectoryHistory, t):
    """X_t[gamma] = gamma(t)."""
    return h.eval_position(t)


def eval_velocity(h: TrajectoryHistory, t):
    """V_t[gamma] = gamma'(t)."""
    return h.eval_velocity(t)


def append(h: TrajectoryHistory, t: float, x, v) -> TrajectoryHistory:
    return h.append(t, x, v)


@dataclass(frozen=True)
class NormDiff:
    pos_sup: float
    vel_sup: float
    pos_error_bound: float
    vel_error_bound: float


def _window_grid(h1: TrajectoryHistory, h2: TrajectoryHistory, t_lo: float, t_hi: float):
    """Union of both knot grids (plus initial-data knots) inside [t_lo, t_hi], and its midpoints."""
    pieces = [np.array([t_lo, t_hi])]
    if t_lo < 0.0:
        pieces.append(np.array([min(0.0, t_hi)]))
        for h in (h1, h2):
            pieces.append(h.init.knot_times)
    for h in (h1, h2):
        pieces.append(h.knot_times)
    grid = np.unique(np.concatenate(pieces))
    grid = grid[(grid >= t_lo) & (grid <= t_hi)]
    mids = 0.5 * (grid[:-1] + grid[1:])
    return grid, np.sort(np.concatenate([grid, mids]))


def sup_norm_diff(h1: TrajectoryHistory, h2: TrajectoryHistory, window: tuple[float, float]) -> NormDiff:
    """
    Sup of |x1 - x2| over [t_lo, T] and of |v1 - v2| over [max(0, t_lo), T].

    Suprema are taken on the union of both knot grids plus midpoints; the reported
    error bounds are 2 s h_knot for positions and 2 (2s) h_knot for velocities.
    """
    t_lo, t_hi = float(window[0]), float(window[1])
    if t_hi < t_lo:
        raise UsageError(f"empty window [{t_lo}, {t_hi}]")
    if h1.dim != h2.dim:
        raise UsageError(f"histories live in different dimensions ({h1.dim} vs {h2.dim})")
    for h in (h1, h2):
        if t_hi > h.t_now + _EDGE_TOL * max(1.0, h.t_now):
            raise HistoryUnderflowError(f"history reaches t={h.t_now:.12g} only, window ends at {t_hi:.12g}")

    knots, dense = _window_grid(h1, h2, t_lo, t_hi)
    dx = np.linalg.norm(h1.eval_position(dense) - h2.eval_position(dense), axis=1)

    vel_dense = dense[dense >= max(0.0, t_lo)]
    if vel_dense.size:
        dv = np.linalg.norm(h1.eval_velocity(vel_dense) - h2.eval_velocity(vel_dense), axis=1)
        vel_sup = float(dv.max())
    else:
        vel_sup = 0.0

    h_knot = float(np.max(np.diff(knots))) if knots.size > 1 else 0.0
    s_bound = max(h1.s_bound, h2.s_bound)
    return NormDiff(
        pos_sup=float(dx.max()),
        vel_sup=vel_sup,
        pos_error_bound=2.0 * s_bound * h_knot,
        vel_error_bound=2.0 * (2.0 * s_bound) * h_knot,
    )


def check_lipschitz(h: TrajectoryHistory, slack: float = LIPSCHITZ_SLACK) -> dict:
    """
    Knot-level membership checks for s-Lipschitz positions and 2s-Lipschitz velocities on [0, t_now].

    Returns:
        dict: worst excess of each bound (<= 0 means satisfied) and a pass flag
    """
    t = h.knot_times
    if t.size < 2:
        return {"position_excess": 0.0, "velocity_excess": 0.0, "speed_excess": 0.0, "holds": True}
    dt = np.diff(t)
    dx = np.linalg.norm(np.diff(h.knot_positions, axis=0), axis=1)
    dv = np.linalg.norm(np.diff(h.knot_velocities, axis=0), axis=1)
    speed = np.linalg.norm(h.knot_velocities, axis=1)
    pos_excess = float(np.max(dx - h.s_bound * dt))
    vel_excess = float(np.max(dv - h.accel_bound * dt))
    speed_excess = float(np.max(speed - h.s_bound))
    return {
        "position_excess": pos_excess,
        "velocity_excess": vel_excess,
        "speed_excess": speed_excess,
        "holds": pos_excess <= slack and vel_excess <= slack and speed_excess <= slack,
    }


def initial_velocity_lipschitz(segments) -> float:
    """L_v0 over all agents' initial segments."""
    return max((seg.velocity_lipschitz for seg in segments), default=0.0)


def _state_columns(dim: int) -> tuple[list[str], list[str]]:
    return [f"x_{k + 1}" for k in range(dim)], [f"v_{k + 1}" for k in range(dim)]


def dump_frame(bundle: HistoryBundle) -> pd.DataFrame:
    """
    Trajectory dump: one row per (agent, knot), columns agent_id, t, x_1..x_d, v_1..v_d.

    Knots are written verbatim. Piecewise-linear initial data adds its t < 0
    velocity knots as extra rows so the dump reloads to the same history.
    """
    x_cols, v_cols = _state_columns(bundle.dim)
    t = bundle.knot_times
    n_knots = t.size
    frames = []
    for agent in range(bundle.n_agents):
        seg = bundle.segments[agent]
        past_t = seg.knot_times[seg.knot_times < 0.0] if not bundle.is_pruned else np.empty(0)
        times = np.concatenate([past_t, t])
        X = np.vstack([seg.position(past_t), bundle.positions[:, agent]]) if past_t.size else bundle.positions[:, agent]
        V = np.vstack([seg.velocity(past_t), bundle.velocities[:, agent]]) if past_t.size else bundle.velocities[:, agent]
        frame = pd.DataFrame(np.column_stack([X, V]), columns=x_cols + v_cols)
        frame.insert(0, COL_T, times)
        frame.insert(0, COL_AGENT, agent)
        frames.append(frame)
    out = pd.concat(frames, ignore_index=True)
    logging.debug("Trajectory dump: %d agents x %d knots", bundle.n_agents, n_knots)
    return out


def load_dump(
    frame: pd.DataFrame,
    s_bound: float,
    window: float | None = None,
    speed_slack: float = APPEND_SPEED_SLACK,
) -> HistoryBundle:
    """
    Rebuild a HistoryBundle from a trajectory dump.

    Rows with t < 0 are initial velocity knots; rows with t >= 0 are stored knots.
    """
    x_cols = sorted((c for c in frame.columns if c.startswith("x_")), key=lambda c: int(c[2:]))
    v_cols = sorted((c for c in frame.columns if c.startswith("v_")), key=lambda c: int(c[2:]))
    if not x_cols or len(x_cols) != len(v_cols):
        raise UsageError(f"trajectory dump needs matching x_k/v_k columns, got {list(frame.columns)}")
    frame = frame.sort_values([COL_AGENT, COL_T], kind="stable")
    agents = sorted(frame[COL_AGENT].unique())
    if agents != list(range(len(agents))):
        raise UsageError("trajectory dump agent ids must be 0..N-1")

    segments, knot_t, knot_x, knot_v = [], None, [], []
    for agent in agents:
        rows = frame[frame[COL_AGENT] == agent]
        past = rows[rows[COL_T] < 0.0]
        stored = rows[rows[COL_T] >= 0.0]
        if stored.empty or stored[COL_T].iloc[0] != 0.0:
            raise UsageError(f"agent {agent}: trajectory dump must start with a knot at t=0")
        x0 = stored[x_cols].to_numpy()[0]
        v0 = stored[v_cols].to_numpy()[0]
        if past.empty:
            segments.append(ConstantVelocity(x0, v0))
        else:
            knots = list(zip(past[COL_T].tolist(), past[v_cols].to_numpy())) + [(0.0, v0)]
            segments.append(PiecewiseLinearVelocity(knots, x0))
        times = stored[COL_T].to_numpy()
        if knot_t is None:
            knot_t = times
        elif times.shape != knot_t.shape or np.any(times != knot_t):
            raise UsageError(f"agent {agent}: knot times differ from agent 0")
        knot_x.append(stored[x_cols].to_numpy())
        knot_v.append(stored[v_cols].to_numpy())

    bundle = HistoryBundle(segments, s_bound, window=window, speed_slack=speed_slack, capacity=len(knot_t) + 1)
    X = np.stack(knot_x, axis=1)
    V = np.stack(knot_v, axis=1)
    for k in range(1, len(knot_t)):
        bundle.append(float(knot_t[k]), X[k], V[k])
    return bundle
