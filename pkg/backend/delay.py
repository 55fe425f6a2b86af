"""
Retarded times: the unique tau >= 0 with c * tau = |z - gamma(t - tau)|.

g(tau) = c tau - |z - gamma(t - tau)| is strictly increasing with slope in
[c - s, c + s], so the root lies in [d/(c+s), d/(c-s)] with d = |z - gamma(t)|.
All pair solves of one right-hand-side evaluation run together as one
vectorized safeguarded Newton iteration with a bisection fallback.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from backend.history import HistoryBundle, TrajectoryHistory
from utils.constants import DELAY_MAX_ITERS, DELAY_REL_TOL, NEWTON_REJECTIONS_BEFORE_BISECTION
from utils.errors import InvariantViolationError, ParameterError

if TYPE_CHECKING:
    from backend.dynamics import SimState


@dataclass(frozen=True)
class RetardedSample:
    tau: float
    x_ret: np.ndarray
    v_ret: np.ndarray
    residual: float
    iterations: int = 0


@dataclass(frozen=True)
class RetardedSolution:
    """Vectorized solver output for M observer/target pairs."""

    tau: np.ndarray  # (M,)
    x_ret: np.ndarray  # (M, d)
    v_ret: np.ndarray  # (M, d)
    residual: np.ndarray  # (M,)
    iterations: np.ndarray  # (M,)


def delay_tolerance(c: float) -> float:
    return DELAY_REL_TOL * max(1.0, c)


def solve_retarded(
    bundle: HistoryBundle,
    observers,
    targets,
    t,
    c: float,
    tol: float | None = None,
    max_iters: int = DELAY_MAX_ITERS,
) -> RetardedSolution:
    """
    Solve c tau_m = |z_m - gamma_{j_m}(t_m - tau_m)| for every pair m.

    Parameters:
        bundle: Histories of the target agents
        observers: Observer positions z, shape (M, d)
        targets: Target agent indices j, shape (M,)
        t: Observation time (scalar or shape (M,))
        c: Propagation speed, must exceed the bundle's speed bound
        tol: Residual tolerance (default 1e-12 * max(1, c))
        max_iters: Iteration cap per pair

    Returns:
        RetardedSolution: tau, retarded positions/velocities, residuals, iteration counts

    Raises:
        InvariantViolationError: some pair is still above tol after max_iters iterations
    """
    s = bundle.s_bound
    if not c > s:
        raise ParameterError(f"propagation speed c={c} must exceed the speed bound s={s} (agents travel slower than c)")
    tol = delay_tolerance(c) if tol is None else float(tol)
    z = np.atleast_2d(np.asarray(observers, dtype=float))
    targets = np.atleast_1d(np.asarray(targets, dtype=np.intp))
    m = targets.size
    t_obs = np.broadcast_to(np.asarray(t, dtype=float), (m,)).copy()

    x_now, v_now = bundle.evaluate(targets, t_obs)
    gap = z - x_now
    dist0 = np.linalg.norm(gap, axis=1)

    tau = np.zeros(m)
    x_ret = x_now.copy()
    v_ret = v_now.copy()
    residual = np.zeros(m)
    iterations = np.zeros(m, dtype=np.int64)

    active = dist0 > 0.0
    if not np.any(active):
        return RetardedSolution(tau, x_ret, v_ret, residual, iterations)

    lo = dist0 / (c + s)
    hi = dist0 / (c - s) * (1.0 + 1e-12) + tol / (c - s)
    guess = np.clip(dist0 / c, lo, hi)
    rejections = np.zeros(m, dtype=np.int64)
    tau[active] = guess[active]

    for _ in range(max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xr, vr = bundle.evaluate(targets[idx], t_obs[idx] - tau[idx])
        diff = z[idx] - xr
        dist = np.linalg.norm(diff, axis=1)
        g = c * tau[idx] - dist
        x_ret[idx] = xr
        v_ret[idx] = vr
        residual[idx] = np.abs(g)
        iterations[idx] += 1

        done = np.abs(g) <= tol
        lo[idx] = np.where(g < 0.0, tau[idx], lo[idx])
        hi[idx] = np.where(g > 0.0, tau[idx], hi[idx])

        # Newton with the slope clamped to its analytic range [c - s, c + s]
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(dist[:, None] > 0.0, diff / dist[:, None], 0.0)
        slope = np.clip(c - np.einsum("md,md->m", unit, vr), c - s, c + s)
        newton = tau[idx] - g / slope
        bisect = 0.5 * (lo[idx] + hi[idx])

        inside = (newton >= lo[idx]) & (newton <= hi[idx])
        rejections[idx] += (~inside & ~done).astype(np.int64)
        use_newton = inside & (rejections[idx] < NEWTON_REJECTIONS_BEFORE_BISECTION)
        step = np.where(use_newton, newton, bisect)

        collapsed = hi[idx] - lo[idx] <= 4.0 * np.finfo(float).eps * np.maximum(hi[idx], 1.0)
        finished = done | collapsed
        tau[idx] = np.where(finished, tau[idx], step)
        active[idx[finished]] = False

    if np.any(active):
        worst = float(residual[active].max())
        raise InvariantViolationError(
            f"retarded-time solve did not reach tol {tol:.3g} within {max_iters} iterations "
            f"on {int(np.count_nonzero(active))} pair(s) (worst residual {worst:.3g})"
        )
    return RetardedSolution(tau, x_ret, v_ret, residual, iterations)


def retarded_time(gamma: TrajectoryHistory, t: float, z, c: float, tol: float | None = None) -> RetardedSample:
    """Retarded time of the path gamma as seen from position z at time t."""
    z = np.asarray(z, dtype=float).reshape(1, -1)
    sol = solve_retarded(gamma.bundle, z, [gamma.agent], t, c, tol=tol)
    return RetardedSample(
        tau=float(sol.tau[0]),
        x_ret=sol.x_ret[0],
        v_ret=sol.v_ret[0],
        residual=float(sol.residual[0]),
        iterations=int(sol.iterations[0]),
    )


@dataclass(frozen=True)
class PairDelays:
    """
    N x N retarded samples: entry (i, j) is what observer i sees of agent j.

    Diagonal entries are tau = 0 with the agent's own current state.
    """

    t: float
    tau: np.ndarray  # (N, N)
    x_ret: np.ndarray  # (N, N, d)
    v_ret: np.ndarray  # (N, N, d)
    residual: np.ndarray  # (N, N)
    iterations: np.ndarray  # (N, N)

    @property
    def n_agents(self) -> int:
        return int(self.tau.shape[0])

    @property
    def max_tau(self) -> float:
        return float(self.tau.max()) if self.tau.size else 0.0

    def sample(self, i: int, j: int) -> RetardedSample:
        return RetardedSample(
            tau=float(self.tau[i, j]),
            x_ret=self.x_ret[i, j],
            v_ret=self.v_ret[i, j],
            residual=float(self.residual[i, j]),
            iterations=int(self.iterations[i, j]),
        )

    def __getitem__(self, ij: tuple[int, int]) -> RetardedSample:
        return self.sample(*ij)


def off_diagonal(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Observer/target index pairs (i, j), i != j, in row-major order."""
    ii, jj = np.nonzero(~np.eye(n, dtype=bool))
    return ii, jj


def pair_delays_at(bundle: HistoryBundle, t: float, X, V, c: float) -> PairDelays:
    """Retarded samples for observers at positions X (velocities V) at time t."""
    X = np.asarray(X, dtype=float)
    V = np.asarray(V, dtype=float)
    n, d = X.shape
    tau = np.zeros((n, n))
    x_ret = np.broadcast_to(X[:, None, :], (n, n, d)).copy()
    v_ret = np.broadcast_to(V[:, None, :], (n, n, d)).copy()
    residual = np.zeros((n, n))
    iterations = np.zeros((n, n), dtype=np.int64)
    if n > 1:
        ii, jj = off_diagonal(n)
        sol = solve_retarded(bundle, X[ii], jj, t, c)
        tau[ii, jj] = sol.tau
        x_ret[ii, jj] = sol.x_ret
        v_ret[ii, jj] = sol.v_ret
        residual[ii, jj] = sol.residual
        iterations[ii, jj] = sol.iterations
    return PairDelays(float(t), tau, x_ret, v_ret, residual, iterations)


def pair_delays(state: "SimState", bundle: HistoryBundle, c: float) -> PairDelays:
    """All N x N retarded samples at the state's time, observers at the state's positions."""
    return pair_delays_at(bundle, state.t, state.x, state.v, c)


def instantaneous_pair_delays(t: float, X, V) -> PairDelays:
    """Zero-delay samples (c = infinity): every observer sees every agent's current state."""
    X = np.asarray(X, dtype=float)
    V = np.asarray(V, dtype=float)
    n, d = X.shape
    return PairDelays(
        float(t),
        np.zeros((n, n)),
        np.broadcast_to(X[None, :, :], (n, n, d)).copy(),
        np.broadcast_to(V[None, :, :], (n, n, d)).copy(),
        np.zeros((n, n)),
        np.zeros((n, n), dtype=np.int64),
    )
