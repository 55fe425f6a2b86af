"""
Influence functions psi: the distance kernel weighting velocity alignment.

Three admissible kinds are supported, all normalized to 0 <= psi <= 1:
  - powerlaw:  psi(r) = (1 + r^2)^(-beta)
  - constant:  psi(r) = level
  - tabulated: linear interpolation between (s, psi(s)) knots, flat beyond the ends
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from utils.constants import REARRANGEMENT_H_GRID
from utils.errors import DomainError, ParameterError

KIND_POWERLAW = "powerlaw"
KIND_CONSTANT = "constant"
KIND_TABULATED = "tabulated"
KERNEL_KINDS = (KIND_POWERLAW, KIND_CONSTANT, KIND_TABULATED)


@dataclass(frozen=True)
class InfluenceFunction:
    kind: str
    beta: float = 0.0
    level: float = 1.0
    knots: tuple[tuple[float, float], ...] = ()
    # (s_max, h_grid) when this kernel is a grid rearrangement of another one
    grid: tuple[float, float] | None = field(default=None, compare=False)

    def __post_init__(self):
        problems = kernel_violations(self.kind, self.beta, self.level, self.knots)
        if problems:
            raise ParameterError("; ".join(problems))

    # --- constructors ---

    @classmethod
    def power_law(cls, beta: float) -> "InfluenceFunction":
        return cls(KIND_POWERLAW, beta=float(beta))

    @classmethod
    def constant(cls, level: float = 1.0) -> "InfluenceFunction":
        return cls(KIND_CONSTANT, level=float(level))

    @classmethod
    def tabulated(cls, knots) -> "InfluenceFunction":
        return cls(KIND_TABULATED, knots=tuple((float(s), float(p)) for s, p in knots))

    @classmethod
    def tabulate(cls, fn: Callable[[np.ndarray], np.ndarray], s_max: float, h_grid: float) -> "InfluenceFunction":
        """Sample an arbitrary [0,1]-valued function on a uniform grid and tabulate it."""
        grid = _uniform_grid(s_max, h_grid)
        values = np.clip(np.asarray(fn(grid), dtype=float), 0.0, 1.0)
        return cls(KIND_TABULATED, knots=tuple(zip(grid.tolist(), values.tolist())))

    @classmethod
    def from_config(cls, cfg: dict) -> "InfluenceFunction":
        """Build from the config schema {type, beta?, level?, knots?}."""
        kind = str(cfg.get("type", "")).strip().lower()
        if kind == KIND_POWERLAW:
            return cls.power_law(cfg.get("beta", 0.0))
        if kind == KIND_CONSTANT:
            return cls.constant(cfg.get("level", 1.0))
        if kind == KIND_TABULATED:
            return cls.tabulated(cfg.get("knots") or ())
        raise ParameterError(f"Unknown kernel type {cfg.get('type')!r}; expected one of {KERNEL_KINDS}")

    def to_config(self) -> dict:
        if self.kind == KIND_POWERLAW:
            return {"type": KIND_POWERLAW, "beta": self.beta}
        if self.kind == KIND_CONSTANT:
            return {"type": KIND_CONSTANT, "level": self.level}
        out = {"type": KIND_TABULATED, "knots": [list(k) for k in self.knots]}
        if self.grid is not None:
            out["grid"] = {"s_max": self.grid[0], "h_grid": self.grid[1]}
        return out

    # --- evaluation ---

    @cached_property
    def _knot_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        arr = np.asarray(self.knots, dtype=float).reshape(-1, 2)
        return arr[:, 0], arr[:, 1]

    def __call__(self, r):
        return evaluate(self, r)

    def values(self, r: np.ndarray) -> np.ndarray:
        """Unchecked vectorized evaluation for hot loops (r already known to be >= 0)."""
        if self.kind == KIND_POWERLAW:
            if self.beta == 0.0:
                return np.ones_like(r, dtype=float)
            return (1.0 + r * r) ** (-self.beta)
        if self.kind == KIND_CONSTANT:
            return np.full_like(r, self.level, dtype=float)
        s, p = self._knot_arrays
        return np.interp(r, s, p)

    @property
    def lipschitz_bound(self) -> float:
        return lipschitz_estimate(self)

    @property
    def is_nonincreasing(self) -> bool:
        if self.kind in (KIND_POWERLAW, KIND_CONSTANT):
            return True
        _, p = self._knot_arrays
        return bool(np.all(np.diff(p) <= 0.0))

    @property
    def label(self) -> str:
        if self.kind == KIND_POWERLAW:
            return f"powerlaw(beta={self.beta:g})"
        if self.kind == KIND_CONSTANT:
            return f"constant(level={self.level:g})"
        suffix = ", rearranged" if self.grid is not None else ""
        return f"tabulated({len(self.knots)} knots{suffix})"


def kernel_violations(kind: str, beta: float, level: float, knots) -> list[str]:
    """List every reason the kernel parameters are inadmissible (empty when fine)."""
    problems = []
    if kind not in KERNEL_KINDS:
        return [f"kernel type must be one of {KERNEL_KINDS}, got {kind!r}"]
    if kind == KIND_POWERLAW:
        if not (math.isfinite(beta) and beta >= 0.0):
            problems.append(f"powerlaw beta must be finite and >= 0, got {beta}")
    elif kind == KIND_CONSTANT:
        if not (math.isfinite(level) and 0.0 < level <= 1.0):
            problems.append(f"constant level must lie in (0, 1], got {level}")
    else:
        if not knots:
            problems.append("tabulated kernel needs at least one knot")
            return problems
        s_prev = None
        for idx, knot in enumerate(knots):
            if len(knot) != 2:
                problems.append(f"knot {idx} must be an (s, psi) pair, got {knot!r}")
                continue
            s, p = knot
            if not (math.isfinite(s) and s >= 0.0):
                problems.append(f"knot {idx}: s must be finite and >= 0, got {s}")
            if not (math.isfinite(p) and 0.0 <= p <= 1.0):
                problems.append(f"knot {idx}: psi must lie in [0, 1], got {p}")
            if s_prev is not None and not s > s_prev:
                problems.append(f"knot {idx}: s must be strictly increasing ({s} after {s_prev})")
            s_prev = s
    return problems


def evaluate(f: InfluenceFunction, r):
    """
    Evaluate psi(r).

    Parameters:
        f: Influence function
        r: Distance (scalar or array), finite and >= 0

    Returns:
        float or np.ndarray: psi(r) in [0, 1]
    """
    arr = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"influence function evaluated at non-finite distance {r!r}")
    if np.any(arr < 0.0):
        raise DomainError(f"influence function evaluated at negative distance {r!r}")
    out = f.values(arr)
    if out.ndim == 0:
        return float(out)
    return out


def lipschitz_estimate(f: InfluenceFunction) -> float:
    """
    A valid Lipschitz constant of psi on [0, inf).

    Constant kernels give 0, tabulated kernels the largest knot-to-knot slope, and
    power laws the analytic sup of |psi'(r)| = 2 beta r (1 + r^2)^(-beta-1),
    attained at r^2 = 1 / (2 beta + 1).
    """
    if f.kind == KIND_CONSTANT:
        return 0.0
    if f.kind == KIND_POWERLAW:
        if f.beta == 0.0:
            return 0.0
        r_star = 1.0 / math.sqrt(2.0 * f.beta + 1.0)
        return 2.0 * f.beta * r_star * (1.0 + r_star * r_star) ** (-f.beta - 1.0)
    s, p = f._knot_arrays
    if len(s) < 2:
        return 0.0
    return float(np.max(np.abs(np.diff(p) / np.diff(s))))


def _uniform_grid(s_max: float, h_grid: float) -> np.ndarray:
    if not (math.isfinite(s_max) and math.isfinite(h_grid)) or s_max < 0.0 or h_grid <= 0.0:
        raise DomainError(f"empty rearrangement grid: s_max={s_max}, h_grid={h_grid}")
    n = int(math.floor(s_max / h_grid + 1e-9)) + 1
    grid = np.arange(n, dtype=float) * h_grid
    if grid[-1] < s_max:
        grid = np.append(grid, s_max)
    return grid


def rearrangement(f: InfluenceFunction, s_max: float, h_grid: float = REARRANGEMENT_H_GRID) -> InfluenceFunction:
    """
    Nonincreasing rearrangement Psi(u) = min over [0, u] of psi, as a running grid minimum.

    The result is tabulated on [0, s_max] with spacing h_grid and records the grid it
    was built on; beyond s_max it is flat. Grid error is at most h_grid * L_psi.
    """
    grid = _uniform_grid(s_max, h_grid)
    running_min = np.minimum.accumulate(f.values(grid))
    out = InfluenceFunction(
        KIND_TABULATED,
        knots=tuple(zip(grid.tolist(), running_min.tolist())),
        grid=(float(s_max), float(h_grid)),
    )
    logging.debug("rearrangement of %s on [0, %g] with %d nodes", f.label, s_max, len(grid))
    return out


def monotone_version(f: InfluenceFunction, h_grid: float = REARRANGEMENT_H_GRID) -> InfluenceFunction:
    """
    The kernel itself when nonincreasing, otherwise its rearrangement over the knot range.

    Tabulated kernels are flat past their last knot, so the knot range is enough.
    """
    if f.is_nonincreasing:
        return f
    s, _ = f._knot_arrays
    logging.info("Kernel %s is not monotone; using its nonincreasing rearrangement.", f.label)
    return rearrangement(f, float(s[-1]), h_grid)
