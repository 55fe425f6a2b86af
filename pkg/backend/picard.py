"""
Picard fixed-point integration of the finite-speed system over short windows.

A candidate velocity path omega (piecewise linear on a uniform grid of the window)
defines candidate positions xi = x(t0) + int omega. The operator

    Upsilon[omega]_i(t) = v_i(t0) + coupling * int_{t0}^t sum_j psi(|xi_j(r - tau_ij) - xi_i(r)|)
                                         (omega_j(r - tau_ij) - omega_i(r)) dr

with c tau_ij(r) = |xi_j(r - tau_ij) - xi_i(r)| is iterated to its fixed point.
This is the verification oracle for the RK4 integrator and, chained window
after window, a second integrator (`scheme: picard`).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from backend.delay import pair_delays_at
from backend.diagnostics import observe
from backend.dynamics import (
    InvariantLedger,
    PicardConfig,
    SimConfig,
    SimState,
    build_bundle,
    interaction,
    spatial_diameter,
)
from backend.history import HistoryBundle, InitialSegment, hermite
from utils.errors import ConfigurationError, UsageError

# successive non-contracting iterates before giving up
NON_CONTRACTING_LIMIT = 3


def analytic_contraction_factor(picard: PicardConfig, c: float, kernel_lipschitz: float) -> float:
    """2T (1 + 2m (L_psi + 1/c) (1 - m/c)^{-1} T) for window length T = picard.t_step."""
    T, m = picard.t_step, picard.m
    return 2.0 * T * (1.0 + 2.0 * m * (kernel_lipschitz + 1.0 / c) / (1.0 - m / c) * T)


class CandidateHistory:
    """
    Stored history up to t0 continued by a candidate (xi, omega) on the window grid.

    Offers the two members the retarded-time solver reads: `s_bound` (the band m)
    and `evaluate(agents, times)`.
    """

    def __init__(self, base: HistoryBundle, times: np.ndarray, X: np.ndarray, V: np.ndarray, band: float):
        self.base = base
        self.s_bound = band
        self._t = times
        self._x = X
        self._v = V

    def evaluate(self, agents, times):
        agents = np.atleast_1d(np.asarray(agents, dtype=np.intp))
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if agents.size == 1 and times.size > 1:
            agents = np.full(times.size, agents[0], dtype=np.intp)
        t0, t_end = self._t[0], self._t[-1]
        if np.any(times > t_end + 1e-9 * max(1.0, abs(t_end))):
            raise UsageError(f"candidate evaluated at t={times.max():.12g} beyond the window end {t_end:.12g}")
        d = self._x.shape[2]
        X = np.empty((times.size, d))
        V = np.empty((times.size, d))
        inside = times > t0
        if np.any(~inside):
            X[~inside], V[~inside] = self.base.evaluate(agents[~inside], times[~inside])
        if np.any(inside):
            u = times[inside]
            a = agents[inside]
            k = np.clip(np.searchsorted(self._t, u, side="right") - 1, 0, self._t.size - 2)
            h = self._t[k + 1] - self._t[k]
            s = np.clip((u - self._t[k]) / h, 0.0, 1.0)[:, None]
            v0, v1 = self._v[k, a], self._v[k + 1, a]
            X[inside] = hermite(s, h[:, None], self._x[k, a], v0, self._x[k + 1, a], v1)
            V[inside] = (1.0 - s) * v0 + s * v1
        return X, V


@dataclass
class PicardResult:
    times: np.ndarray  # (n+1,)
    positions: np.ndarray  # (n+1, N, d)
    velocities: np.ndarray  # (n+1, N, d)
    iterations: int
    differences: list[float]
    contraction_factors: list[float]
    analytic_factor: float
    max_tau: np.ndarray = field(default_factory=lambda: np.empty(0))
    max_delay_iterations: int = 0

    @property
    def empirical_factor(self) -> float:
        return max(self.contraction_factors) if self.contraction_factors else 0.0

    @property
    def within_analytic(self) -> bool:
        return self.empirical_factor <= self.analytic_factor

    def append_to(self, bundle: HistoryBundle) -> None:
        for k in range(1, self.times.size):
            bundle.append(float(self.times[k]), self.positions[k], self.velocities[k])


def _positions(x_start: np.ndarray, times: np.ndarray, W: np.ndarray) -> np.ndarray:
    # trapezoid is exact on piecewise-linear velocities
    return x_start[None] + integrate.cumulative_trapezoid(W, times, axis=0, initial=0.0)


def _apply(view: CandidateHistory, times, X, W, v_start, config: SimConfig):
    forces = np.empty_like(W)
    max_tau = np.zeros(times.size)
    max_iters = 0
    for k, t in enumerate(times):
        delays = pair_delays_at(view, t, X[k], W[k], config.c)
        forces[k] = interaction(delays, X[k], W[k], config.kernel, config.coupling)
        max_tau[k] = delays.max_tau
        max_iters = max(max_iters, int(delays.iterations.max()))
    W_new = v_start[None] + integrate.cumulative_trapezoid(forces, times, axis=0, initial=0.0)
    return W_new, max_tau, max_iters


def solve_picard(config: SimConfig, picard: PicardConfig, initial: HistoryBundle | list[InitialSegment]) -> PicardResult:
    """
    Fixed point of the Picard operator on [t0, t0 + t_step], t0 = the history's current time.

    Parameters:
        config: Model parameters (c, s, kernel, coupling)
        picard: Band m, window length, iteration cap, tolerance, grid size
        initial: Initial segments (window starts at t = 0) or a running history bundle

    Returns:
        PicardResult: grid, fixed-point positions/velocities and the contraction record
    """
    bundle = initial if isinstance(initial, HistoryBundle) else build_bundle(config, initial)
    analytic = analytic_contraction_factor(picard, config.c, config.kernel.lipschitz_bound)
    if analytic >= 1.0:
        raise ConfigurationError(
            f"Picard window t_step={picard.t_step:g} gives contraction factor {analytic:.4g} >= 1; use a smaller t_step"
        )
    t0 = bundle.t_now
    times = t0 + picard.t_step * np.arange(picard.grid + 1) / picard.grid
    times[-1] = t0 + picard.t_step
    x_start = bundle.current_positions.copy()
    v_start = bundle.current_velocities.copy()

    W = np.broadcast_to(v_start, (times.size,) + v_start.shape).copy()
    X = _positions(x_start, times, W)
    differences, factors = [], []
    streak = 0
    max_tau = np.zeros(times.size)
    max_delay_iters = 0

    for iteration in range(1, picard.max_iters + 1):
        view = CandidateHistory(bundle, times, X, W, picard.m)
        W_new, max_tau, max_delay_iters = _apply(view, times, X, W, v_start, config)
        diff = float(np.max(np.abs(W_new - W)))
        if differences and differences[-1] > 100.0 * picard.tol:
            factor = diff / differences[-1]
            factors.append(factor)
            streak = streak + 1 if factor >= 1.0 else 0
            if streak >= NON_CONTRACTING_LIMIT:
                raise ConfigurationError(
                    f"Picard iterates stopped contracting at t0={t0:g} (factor {factor:.3g} over "
                    f"{NON_CONTRACTING_LIMIT} iterates); use a smaller t_step"
                )
        differences.append(diff)
        W = W_new
        X = _positions(x_start, times, W)
        if diff <= picard.tol:
            break
    else:
        raise ConfigurationError(
            f"Picard iteration did not reach tol={picard.tol:g} in {picard.max_iters} iterates "
            f"(last difference {differences[-1]:.3g}); use a smaller t_step"
        )

    logging.debug("Picard window at t0=%g converged in %d iterates", t0, iteration)
    return PicardResult(
        times=times,
        positions=X,
        velocities=W,
        iterations=iteration,
        differences=differences,
        contraction_factors=factors,
        analytic_factor=analytic,
        max_tau=max_tau,
        max_delay_iterations=max_delay_iters,
    )


def advance_picard(state: SimState, bundle: HistoryBundle, config: SimConfig, ledger: InvariantLedger):
    """
    Chain Picard windows from the bundle's current time to the horizon.

    Returns:
        tuple: (final state, number of windows, diagnostics rows sampled at window ends)
    """
    rows = []
    windows = 0
    horizon = config.horizon
    worst_factor = 0.0
    while state.t < horizon - 1e-12 * max(1.0, horizon):
        span = min(config.picard.t_step, horizon - state.t)
        result = solve_picard(config, replace(config.picard, t_step=span), bundle)
        for k in range(1, result.times.size):
            ledger.record_delay_bound(
                float(result.times[k]),
                float(result.max_tau[k]),
                spatial_diameter(result.positions[k]),
                config.c,
                config.s,
                result.max_delay_iterations,
            )
            ledger.record_speeds(float(result.times[k]), result.velocities[k], config.s, config.speed_slack)
        result.append_to(bundle)
        worst_factor = max(worst_factor, result.empirical_factor)
        windows += 1
        state = SimState(bundle.t_now, bundle.current_positions.copy(), bundle.current_velocities.copy())
        done = state.t >= horizon - 1e-12 * max(1.0, horizon)
        if windows % config.sample_every == 0 or done:
            delays = pair_delays_at(bundle, state.t, state.x, state.v, config.c)
            rows.append(observe(state, delays, config.kernel))
        logging.info("Picard window %d done at t=%.4g (%d iterates)", windows, state.t, result.iterations)
    if windows:
        logging.info("Largest empirical Picard contraction factor: %.3g", worst_factor)
    return state, windows, rows
