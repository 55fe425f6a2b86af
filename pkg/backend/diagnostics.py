"""
Flocking observables along a run and the checks made against them.

A diagnostics series is a pandas DataFrame with columns
t, dX, dV, Rv, D, taubar, psibar (one row per sample).
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd
from scipy import integrate, stats

from backend.influence import InfluenceFunction
from utils.constants import (
    COL_D,
    COL_DV,
    COL_DX,
    COL_PSIBAR,
    COL_RV,
    COL_T,
    COL_TAUBAR,
    DIAGNOSTICS_COLUMNS,
)
from utils.errors import UsageError

if TYPE_CHECKING:
    from backend.delay import PairDelays
    from backend.dynamics import SimState

# samples at or below this are treated as zero by the rate fit
FIT_FLOOR = 1e-12
FIT_MIN_SAMPLES = 10


@dataclass
class CheckReport:
    name: str
    holds: bool
    worst_margin: float
    first_violation: float | None = None
    violations: int = 0
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def _pairwise_max(A: np.ndarray) -> float:
    if A.shape[0] < 2:
        return 0.0
    return float(np.max(np.linalg.norm(A[:, None, :] - A[None, :, :], axis=2)))


def observe(state: "SimState", delays: "PairDelays", kernel: InfluenceFunction) -> dict:
    """
    One sample row: spatial/velocity diameters, velocity radius, the delayed-velocity
    gap D, the largest delay and the smallest communication rate.

    D uses the agents' current velocities v_j(t), not interpolated ones.
    """
    X, V = state.x, state.v
    n = X.shape[0]
    row = {
        COL_T: float(state.t),
        COL_DX: _pairwise_max(X),
        COL_DV: _pairwise_max(V),
        COL_RV: float(np.max(np.linalg.norm(V, axis=1))),
        COL_D: 0.0,
        COL_TAUBAR: 0.0,
        COL_PSIBAR: 1.0,
    }
    if n < 2:
        return row
    off = ~np.eye(n, dtype=bool)
    weights = kernel.values(np.linalg.norm(delays.x_ret - X[:, None, :], axis=2))
    gaps = np.linalg.norm(delays.v_ret - V[None, :, :], axis=2)
    per_agent = np.where(off, weights * gaps, 0.0).sum(axis=1) / (n - 1)
    row[COL_D] = float(per_agent.max())
    row[COL_TAUBAR] = float(delays.tau[off].max())
    row[COL_PSIBAR] = float(weights[off].min())
    return row


def series_frame(rows: list[dict]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=DIAGNOSTICS_COLUMNS)


def series_from_frame(source) -> pd.DataFrame:
    """Reload a diagnostics series from a DataFrame or CSV path, checking its columns."""
    frame = pd.read_csv(source) if isinstance(source, (str, Path)) else source
    missing = [c for c in DIAGNOSTICS_COLUMNS if c not in frame.columns]
    if missing:
        raise UsageError(f"diagnostics series lacks columns {missing}")
    return frame[DIAGNOSTICS_COLUMNS].astype(float).reset_index(drop=True)


def check_decay(series: pd.DataFrame, eta: float, sigma: float, kappa: float, slack: float = 0.0) -> CheckReport:
    """
    Exponential flocking check at every sample (strict inequalities):

        dV(t) < sigma e^{-eta t},  D(t) < kappa e^{-eta t},  dX(t) < dX(0) + sigma/eta

    Parameters:
        series: Diagnostics series
        eta, sigma, kappa: Certified rate and envelopes; need sigma > dV(0), kappa > D(0)
        slack: Numerical slack added to every right-hand side

    Returns:
        CheckReport: holds, first violating time and the field that failed first
    """
    if series.empty:
        raise UsageError("check_decay needs at least one sample")
    if not eta > 0.0:
        raise UsageError(f"decay rate eta must be > 0, got {eta}")
    dV0 = float(series[COL_DV].iloc[0])
    D0 = float(series[COL_D].iloc[0])
    if not sigma > dV0:
        raise UsageError(f"sigma={sigma} must exceed dV(0)={dV0}")
    if not kappa > D0:
        raise UsageError(f"kappa={kappa} must exceed D(0)={D0}")

    t = series[COL_T].to_numpy()
    decay = np.exp(-eta * t)
    margins = {
        COL_DV: series[COL_DV].to_numpy() - (sigma * decay + slack),
        COL_D: series[COL_D].to_numpy() - (kappa * decay + slack),
        COL_DX: series[COL_DX].to_numpy() - (float(series[COL_DX].iloc[0]) + sigma / eta + slack),
    }
    bad = np.zeros(t.size, dtype=bool)
    for margin in margins.values():
        bad |= margin >= 0.0
    first = None
    failed_field = None
    if np.any(bad):
        k = int(np.argmax(bad))
        first = float(t[k])
        failed_field = next(name for name, margin in margins.items() if margin[k] >= 0.0)
        logging.warning("Decay check fails first at t=%.6g on %s", first, failed_field)
    return CheckReport(
        name="decay",
        holds=not bool(np.any(bad)),
        worst_margin=float(max(m.max() for m in margins.values())),
        first_violation=first,
        violations=int(np.count_nonzero(bad)),
        details={
            "eta": eta,
            "sigma": sigma,
            "kappa": kappa,
            "slack": slack,
            "failed_field": failed_field,
            "worst_margin_by_field": {name: float(m.max()) for name, m in margins.items()},
        },
    )


def fit_decay_rate(series: pd.DataFrame, field_name: str = COL_DV) -> tuple[float, float]:
    """
    Least-squares slope of log(field) against t, over samples above 1e-12.

    Returns:
        tuple: (rate, r_squared); (nan, nan) with fewer than 10 usable samples
    """
    if field_name not in (COL_DV, COL_D):
        raise UsageError(f"fit_decay_rate fits dV or D, got {field_name!r}")
    values = series[field_name].to_numpy()
    keep = values > FIT_FLOOR
    if np.count_nonzero(keep) < FIT_MIN_SAMPLES:
        logging.info("Too few positive %s samples (%d) to fit a decay rate", field_name, int(np.count_nonzero(keep)))
        return math.nan, math.nan
    t = series[COL_T].to_numpy()[keep]
    logs = np.log(values[keep])
    if np.all(logs == logs[0]):
        return 0.0, 1.0
    fit = stats.linregress(t, logs)
    return float(fit.slope), float(fit.rvalue**2)


def check_shrinkage(series: pd.DataFrame, alignment_factor: float, tol: float = 1e-9) -> CheckReport:
    """
    Sampled form of the velocity-diameter inequality

        (dV(t+h) - dV(t)) / h <= -k psibar(t) dV(t) + 2 D(t) + eps

    with k = N/(N-1) for the standard prefactor. eps is tol plus the change of the
    right-hand side across the sample interval.
    """
    t = series[COL_T].to_numpy()
    if t.size < 2:
        return CheckReport("shrinkage", True, -math.inf)
    dV = series[COL_DV].to_numpy()
    bound = -alignment_factor * series[COL_PSIBAR].to_numpy() * dV + 2.0 * series[COL_D].to_numpy()
    h = np.diff(t)
    slope = np.diff(dV) / h
    eps = tol + np.abs(np.diff(bound))
    margin = slope - (np.maximum(bound[:-1], bound[1:]) + eps)
    return _report("shrinkage", t[:-1], margin, {"alignment_factor": alignment_factor, "max_eps": float(eps.max())})


def check_delay_integral(series: pd.DataFrame, velocity_lipschitz: float, tol: float = 1e-9) -> CheckReport:
    """
    Sampled delayed-gap bound

        D(t) <= L_v0 max(taubar(t) - t, 0) + int_{max(t - taubar, 0)}^t (D + dV)

    The integral is a trapezoid on the sample grid; the allowance covers its error.
    """
    t = series[COL_T].to_numpy()
    D = series[COL_D].to_numpy()
    taubar = series[COL_TAUBAR].to_numpy()
    f = D + series[COL_DV].to_numpy()
    if t.size < 2:
        margin = D - velocity_lipschitz * np.maximum(taubar - t, 0.0) - tol
        return _report("delay_integral", t, margin, {})
    cum = integrate.cumulative_trapezoid(f, t, initial=0.0)
    lower = np.maximum(t - taubar, 0.0)
    integral = cum - np.interp(lower, t, cum)
    step = float(np.max(np.diff(t)))
    variation = float(np.max(np.abs(np.diff(f))))
    allowance = tol + variation * (0.25 * taubar + step)
    margin = D - (velocity_lipschitz * np.maximum(taubar - t, 0.0) + integral + allowance)
    return _report("delay_integral", t, margin, {"velocity_lipschitz": velocity_lipschitz, "sample_step": step})


def check_diameter(series: pd.DataFrame, tol: float = 1e-9) -> CheckReport:
    """Sampled dX(t) <= dX(0) + int_0^t dV (trapezoid, with its error allowance)."""
    t = series[COL_T].to_numpy()
    dX = series[COL_DX].to_numpy()
    dV = series[COL_DV].to_numpy()
    if t.size < 2:
        return CheckReport("diameter", True, -math.inf)
    cum = integrate.cumulative_trapezoid(dV, t, initial=0.0)
    variation = float(np.max(np.abs(np.diff(dV))))
    allowance = tol + 0.25 * variation * t
    margin = dX - (dX[0] + cum + allowance)
    return _report("diameter", t, margin, {})


def _report(name: str, t: np.ndarray, margin: np.ndarray, details: dict) -> CheckReport:
    bad = margin > 0.0
    first = float(t[int(np.argmax(bad))]) if np.any(bad) else None
    if first is not None:
        logging.warning("%s check fails first at t=%.6g (excess %.3g)", name, first, float(margin.max()))
    return CheckReport(
        name=name,
        holds=not bool(np.any(bad)),
        worst_margin=float(margin.max()) if margin.size else -math.inf,
        first_violation=first,
        violations=int(np.count_nonzero(bad)),
        details=details,
    )
