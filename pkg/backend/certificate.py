"""
Flocking certificates: a propagation speed c* above which exponential flocking is guaranteed.

For data (dX0, dV0, s, L_v0, D0) a certificate is a tuple (eta, epsilon, sigma, kappa, c*)
such that, with A = dX0 + sigma/eta, tau* = A/(c* - s) and psi* = Psi(c* tau*),

    (1)  L_v0 tau* + (kappa + sigma) (e^{eta tau*} - 1)/eta <= kappa
    (2)  psi* > eta  and  2 kappa / (psi* - eta) <= sigma - dV0

where Psi is the kernel itself when nonincreasing, else its nonincreasing rearrangement.
Both conditions only get easier as c grows, so a certificate holds for every c >= c*.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import optimize

from backend.data_processing import run_query
from backend.influence import InfluenceFunction, monotone_version
from utils.constants import (
    EPSILON_MENU,
    ETA_GRID_POINTS,
    ETA_MAX,
    ETA_MIN,
    SIGMA_FACTORS,
    SIGMA_OVER_ETA_WHEN_AT_REST,
    SPEED_BRACKET_START,
    SPEED_GRID_POINTS,
    SPEED_UPPER,
)
from utils.errors import InfeasibleError, InvariantViolationError, ParameterError, UsageError

# relative tolerance when re-validating conditions (1) and (2)
CONDITION_REL_TOL = 1e-12
# c1 is nudged up by this relative amount so condition (1) holds after roundoff
C1_NUDGE = 1e-12

METHOD_CONSTANT = "constant_recipe"
METHOD_SEARCH = "numerical_search"


@dataclass(frozen=True)
class EtaChoice:
    eta: float | None
    margin: float
    feasible: bool
    refined: bool = False


@dataclass
class FlockingCertificate:
    eta: float
    epsilon: float
    sigma: float
    kappa: float
    tau_star: float
    psi_star: float
    c1: float
    c_star: float
    dX0: float
    dV0: float
    s: float
    kernel: InfluenceFunction
    L_v0: float = 0.0
    D0: float = 0.0
    method: str = METHOD_CONSTANT
    search: dict = field(default_factory=dict)

    @property
    def spread(self) -> float:
        """A = dX0 + sigma/eta, the bound on the spatial diameter."""
        return self.dX0 + self.sigma / self.eta

    def conditions(self, c: float | None = None) -> dict:
        """Evaluate conditions (1) and (2) at speed c (default c*)."""
        c = self.c_star if c is None else float(c)
        return evaluate_conditions(
            self.kernel, c, self.s, self.eta, self.sigma, self.kappa, self.dX0, self.dV0, self.L_v0
        )

    def holds_at(self, c: float | None = None) -> bool:
        return self.conditions(c)["holds"]

    def as_dict(self) -> dict:
        return {
            "eta": self.eta,
            "epsilon": self.epsilon,
            "sigma": self.sigma,
            "kappa": self.kappa,
            "tau_star": self.tau_star,
            "psi_star": self.psi_star,
            "c1": self.c1,
            "c_star": self.c_star,
            "method": self.method,
            "inputs": {
                "dX0": self.dX0,
                "dV0": self.dV0,
                "s": self.s,
                "L_v0": self.L_v0,
                "D0": self.D0,
                "kernel": self.kernel.to_config(),
            },
            "search": self.search,
            "conditions": self.conditions(),
        }


def evaluate_conditions(kernel, c, s, eta, sigma, kappa, dX0, dV0, L_v0=0.0) -> dict:
    if not c > s:
        return {"holds": False, "reason": f"c={c} does not exceed s={s}"}
    A = dX0 + sigma / eta
    tau = A / (c - s)
    psi_star = float(kernel.values(np.asarray(c * tau)))
    lhs1 = L_v0 * tau + (kappa + sigma) * math.expm1(eta * tau) / eta
    cond1 = lhs1 <= kappa * (1.0 + CONDITION_REL_TOL)
    gap = psi_star - eta
    lhs2 = 2.0 * kappa / gap if gap > 0.0 else math.inf
    cond2 = gap > 0.0 and lhs2 <= (sigma - dV0) * (1.0 + CONDITION_REL_TOL)
    return {
        "c": c,
        "tau": tau,
        "psi_star": psi_star,
        "condition_1": {"lhs": lhs1, "rhs": kappa, "holds": cond1},
        "condition_2": {"lhs": lhs2, "rhs": sigma - dV0, "psi_star_exceeds_eta": gap > 0.0, "holds": cond2},
        "holds": bool(cond1 and cond2),
    }


def _check_data(dX0: float, dV0: float):
    if not (math.isfinite(dX0) and math.isfinite(dV0)) or dX0 < 0.0 or dV0 < 0.0:
        raise ParameterError(f"initial diameters must be finite and >= 0 (dX0={dX0}, dV0={dV0})")


def eta_margin(kernel: InfluenceFunction, dX0: float, dV0: float, eta) -> np.ndarray:
    """m(eta) = Psi(dX0 + dV0/eta) - eta."""
    eta = np.asarray(eta, dtype=float)
    return kernel.values(dX0 + dV0 / eta) - eta


def find_eta(kernel: InfluenceFunction, dX0: float, dV0: float, grid_points: int = ETA_GRID_POINTS) -> EtaChoice:
    """
    Rate eta in (0, 1) maximizing Psi(dX0 + dV0/eta) - eta.

    A log grid over (1e-6, 1 - 1e-6) locates the maximizer; an interior maximizer is
    refined by golden-section search. The data admit a certificate iff the margin is > 0.
    """
    _check_data(dX0, dV0)
    psi = monotone_version(kernel)
    grid = np.geomspace(ETA_MIN, ETA_MAX, max(int(grid_points), 3))
    margins = eta_margin(psi, dX0, dV0, grid)
    k = int(np.argmax(margins))
    eta, best = float(grid[k]), float(margins[k])
    refined = False
    interior = 0 < k < grid.size - 1
    if interior and margins[k] > margins[k - 1] and margins[k] > margins[k + 1]:
        res = optimize.minimize_scalar(
            lambda e: -float(eta_margin(psi, dX0, dV0, e)),
            bracket=(float(grid[k - 1]), eta, float(grid[k + 1])),
            method="golden",
        )
        candidate = float(res.x)
        if ETA_MIN <= candidate <= ETA_MAX and -float(res.fun) > best:
            eta, best, refined = candidate, -float(res.fun), True
    feasible = best > 0.0
    logging.info("find_eta: eta=%.6g margin=%.6g (%s)", eta, best, "feasible" if feasible else "infeasible")
    return EtaChoice(eta=eta if feasible else None, margin=best, feasible=feasible, refined=refined)


def _sigma_menu(dV0: float, eta: float, sigma_factors, sigma_values) -> list[float]:
    if sigma_values:
        menu = [float(v) for v in sigma_values]
    elif dV0 > 0.0:
        menu = [dV0 * f for f in sigma_factors]
    else:
        menu = [eta * f for f in SIGMA_OVER_ETA_WHEN_AT_REST]
    return [sig for sig in menu if sig > dV0]


def solve_c1(eta: float, kappa: float, sigma: float, spread: float, s: float) -> float:
    """
    The c > s solving (1/eta) ln(eta kappa/(kappa + sigma) + 1) = spread/(c - s), by bisection.

    The left side is constant in c, the right side decreases from +inf to 0, so the
    bracket starts at s(1 + 1e-6) and doubles its upper end until the sign flips.
    """
    target = math.log1p(eta * kappa / (kappa + sigma)) / eta

    def residual(c):
        return spread / (c - s) - target

    lo = s * (1.0 + SPEED_BRACKET_START)
    if residual(lo) <= 0.0:
        return lo
    hi = 2.0 * lo
    while residual(hi) > 0.0:
        hi *= 2.0
        if hi - s > SPEED_UPPER:
            raise InfeasibleError(
                f"c1 lies beyond s + {SPEED_UPPER:g}",
                report={"eta": eta, "kappa": kappa, "sigma": sigma, "spread": spread},
            )
    c1 = optimize.bisect(residual, lo, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps, maxiter=500)
    return c1 * (1.0 + C1_NUDGE)


def critical_speed_constant_data(
    kernel: InfluenceFunction,
    dX0: float,
    dV0: float,
    s: float,
    eta: float,
    epsilons=EPSILON_MENU,
    sigma_factors=SIGMA_FACTORS,
    sigma_values=None,
) -> FlockingCertificate:
    """
    Certificate for constant initial velocities (L_v0 = 0, D(0) = 0).

    Scans epsilon and sigma on fixed menus for Psi((1 + eps) A) > eta, keeps the pair
    with the largest kappa = (sigma - dV0)/2 (Psi((1 + eps) A) - eta), solves for c1 and
    takes c* = max(c1, (1 + eps) s / eps).

    Raises:
        InfeasibleError: No menu pair satisfies the side condition (scan attached)
    """
    _check_data(dX0, dV0)
    if not (math.isfinite(s) and s > 0.0):
        raise ParameterError(f"speed bound s must be > 0, got {s}")
    if not (0.0 < eta < 1.0):
        raise ParameterError(f"eta must lie in (0, 1), got {eta}")
    psi = monotone_version(kernel)
    sigmas = _sigma_menu(dV0, eta, sigma_factors, sigma_values)
    scan, best = [], None
    for eps in epsilons:
        for sigma in sigmas:
            spread = dX0 + sigma / eta
            psi_eps = float(psi.values(np.asarray((1.0 + eps) * spread)))
            kappa = 0.5 * (sigma - dV0) * (psi_eps - eta)
            ok = psi_eps > eta
            scan.append({"epsilon": eps, "sigma": sigma, "psi": psi_eps, "kappa": kappa if ok else None})
            if ok and (best is None or kappa > best[2]):
                best = (eps, sigma, kappa)
    search = {
        "epsilons": list(epsilons),
        "sigmas": sigmas,
        "scan_size": len(scan),
    }
    if best is None:
        raise InfeasibleError(
            f"no (epsilon, sigma) on the menu gives Psi((1+eps)(dX0 + sigma/eta)) > eta={eta:g}",
            report={"eta": eta, "scan": scan, **search},
        )

    eps, sigma, kappa = best
    spread = dX0 + sigma / eta
    c1 = solve_c1(eta, kappa, sigma, spread, s)
    c_star = max(c1, (1.0 + eps) / eps * s)
    tau_star = spread / (c_star - s)
    cert = FlockingCertificate(
        eta=eta,
        epsilon=eps,
        sigma=sigma,
        kappa=kappa,
        tau_star=tau_star,
        psi_star=float(psi.values(np.asarray(c_star * tau_star))),
        c1=c1,
        c_star=c_star,
        dX0=dX0,
        dV0=dV0,
        s=s,
        kernel=psi,
        method=METHOD_CONSTANT,
        search=search,
    )
    if not cert.holds_at():
        raise InvariantViolationError(f"certificate fails its own conditions at c*={c_star:.12g}: {cert.conditions()}")
    logging.info("Constant-data certificate: eta=%.4g eps=%.4g sigma=%.4g kappa=%.4g c*=%.6g", eta, eps, sigma, kappa, c_star)
    return cert


def monotone_speed_extension(cert: FlockingCertificate, c: float) -> bool:
    """Re-check both conditions at a speed c >= c*; true whenever the certificate is sound."""
    if c < cert.c_star:
        raise UsageError(f"speed c={c} lies below the certified c*={cert.c_star}")
    return cert.holds_at(c)


def _feasibility_on_grid(psi, c, s, eta, sigma, dX0, dV0, L_v0, D0):
    """Vectorized over c: largest admissible kappa and the margins of each requirement."""
    spread = dX0 + sigma / eta
    tau = spread / (c - s)
    psi_star = psi.values(c * tau)
    q = np.expm1(eta * tau) / eta
    kappa_max = 0.5 * (sigma - dV0) * (psi_star - eta)
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa_low = np.where(q < 1.0, (L_v0 * tau + sigma * q) / (1.0 - q), np.inf)
    margins = {
        "psi_star_minus_eta": psi_star - eta,
        "one_minus_q": 1.0 - q,
        "kappa_minus_D0": kappa_max - D0,
        "kappa_minus_required": kappa_max - kappa_low,
    }
    feasible = (psi_star > eta) & (q < 1.0) & (kappa_max > D0) & (kappa_max >= kappa_low)
    return feasible, kappa_max, margins


def feasibility_nonconstant(
    kernel: InfluenceFunction,
    dX0: float,
    dV0: float,
    s: float,
    L_v0: float,
    D0: float,
    eta_grid_points: int = 40,
    speed_grid_points: int = SPEED_GRID_POINTS,
    sigma_factors=SIGMA_FACTORS,
    sigma_values=None,
) -> FlockingCertificate:
    """
    Numerical search for a certificate with nonconstant initial velocities.

    For every (eta, sigma) grid point the feasible speeds form a half-line (both
    conditions improve with c), so the smallest feasible c is located on a geometric
    grid of c - s up to 1e12 and refined by bisection; kappa is taken as large as
    condition (2) allows. The grid contains the constant-data recipe's (eta, sigma).

    Raises:
        InfeasibleError: No grid point is feasible (best near-miss margins attached)
    """
    _check_data(dX0, dV0)
    if L_v0 < 0.0 or D0 < 0.0:
        raise ParameterError(f"L_v0 and D0 must be >= 0 (got {L_v0}, {D0})")
    psi = monotone_version(kernel)
    etas = list(np.geomspace(ETA_MIN, ETA_MAX, max(int(eta_grid_points), 2)))
    recipe = find_eta(psi, dX0, dV0)
    if recipe.feasible:
        etas.append(recipe.eta)
    offsets = np.geomspace(s * SPEED_BRACKET_START, SPEED_UPPER, max(int(speed_grid_points), 2))
    speeds = s + offsets

    best, near_miss = None, None
    for eta in sorted(set(float(e) for e in etas)):
        for sigma in _sigma_menu(dV0, eta, sigma_factors, sigma_values):
            feasible, _, margins = _feasibility_on_grid(psi, speeds, s, eta, sigma, dX0, dV0, L_v0, D0)
            if not feasible[-1]:
                worst = min(float(m[-1]) for m in margins.values())
                if near_miss is None or worst > near_miss["worst_margin"]:
                    near_miss = {
                        "eta": eta,
                        "sigma": sigma,
                        "worst_margin": worst,
                        "margins": {k: float(m[-1]) for k, m in margins.items()},
                    }
                continue
            k = int(np.argmax(feasible))
            c_hi = float(speeds[k])
            if k > 0:
                c_lo = float(speeds[k - 1])
                for _ in range(200):
                    mid = 0.5 * (c_lo + c_hi)
                    if mid <= c_lo or mid >= c_hi:
                        break
                    ok, _, _ = _feasibility_on_grid(psi, np.asarray([mid]), s, eta, sigma, dX0, dV0, L_v0, D0)
                    if ok[0]:
                        c_hi = mid
                    else:
                        c_lo = mid
            if best is None or c_hi < best[0]:
                best = (c_hi, eta, sigma)

    search = {
        "eta_grid_points": int(eta_grid_points),
        "speed_grid_points": int(speed_grid_points),
        "etas_include_recipe": recipe.feasible,
    }
    if best is None:
        raise InfeasibleError(
            "no (eta, sigma, c) on the search grid satisfies both flocking conditions",
            report={"near_miss": near_miss, **search},
        )

    c_star, eta, sigma = best
    _, kappa_arr, _ = _feasibility_on_grid(psi, np.asarray([c_star]), s, eta, sigma, dX0, dV0, L_v0, D0)
    kappa = float(kappa_arr[0])
    spread = dX0 + sigma / eta
    tau_star = spread / (c_star - s)
    cert = FlockingCertificate(
        eta=eta,
        epsilon=s / (c_star - s),
        sigma=sigma,
        kappa=kappa,
        tau_star=tau_star,
        psi_star=float(psi.values(np.asarray(c_star * tau_star))),
        c1=c_star,
        c_star=c_star,
        dX0=dX0,
        dV0=dV0,
        s=s,
        kernel=psi,
        L_v0=L_v0,
        D0=D0,
        method=METHOD_SEARCH,
        search=search,
    )
    if not cert.holds_at():
        raise InvariantViolationError(f"searched certificate fails its own conditions: {cert.conditions()}")
    logging.info("Searched certificate: eta=%.4g sigma=%.4g kappa=%.4g c*=%.6g", eta, sigma, kappa, c_star)
    return cert


def certify(
    kernel: InfluenceFunction,
    dX0: float,
    dV0: float,
    s: float,
    L_v0: float = 0.0,
    D0: float = 0.0,
    eta: float | None = None,
    **menus,
) -> FlockingCertificate:
    """
    Certificate for the given data: the constant-data recipe when L_v0 = D0 = 0,
    otherwise the numerical search. eta defaults to find_eta's choice.
    """
    if L_v0 == 0.0 and D0 == 0.0:
        if eta is None:
            choice = find_eta(kernel, dX0, dV0, grid_points=menus.pop("eta_grid_points", ETA_GRID_POINTS))
            if not choice.feasible:
                raise InfeasibleError(
                    f"Psi(dX0 + dV0/eta) <= eta for every eta in (0, 1) (best margin {choice.margin:.4g})",
                    report={"eta_margin": choice.margin},
                )
            eta = choice.eta
        menus.pop("speed_grid_points", None)
        return critical_speed_constant_data(kernel, dX0, dV0, s, eta, **menus)
    menus.pop("epsilons", None)
    return feasibility_nonconstant(kernel, dX0, dV0, s, L_v0, D0, **menus)


def beta_sweep(betas, data_sizes, s: float = 1.0, grid_points: int = ETA_GRID_POINTS) -> pd.DataFrame:
    """
    Power-law feasibility table over beta and (dX0, dV0).

    Returns:
        pd.DataFrame: beta, dX0, dV0, feasible, eta, margin, c_star (NaN when infeasible)
    """
    rows = []
    for beta in betas:
        kernel = InfluenceFunction.power_law(beta)
        for dX0, dV0 in data_sizes:
            choice = find_eta(kernel, dX0, dV0, grid_points=grid_points)
            c_star = math.nan
            if choice.feasible:
                try:
                    c_star = critical_speed_constant_data(kernel, dX0, dV0, s, choice.eta).c_star
                except InfeasibleError:
                    logging.info("beta=%g (dX0=%g, dV0=%g): eta found but no menu pair", beta, dX0, dV0)
            rows.append(
                {
                    "beta": float(beta),
                    "dX0": float(dX0),
                    "dV0": float(dV0),
                    "feasible": bool(choice.feasible and math.isfinite(c_star)),
                    "eta": choice.eta if choice.eta is not None else math.nan,
                    "margin": choice.margin,
                    "c_star": c_star,
                }
            )
    return pd.DataFrame(rows)


def feasibility_boundary(sweep: pd.DataFrame) -> pd.DataFrame:
    """
    Per data size: the largest feasible beta and the smallest infeasible beta above it.
    """
    q = """--sql
    WITH flips AS (
        SELECT
            dX0,
            dV0,
            beta,
            feasible,
            LAG(feasible) OVER (PARTITION BY dX0, dV0 ORDER BY beta) AS prev_feasible,
            LAG(beta) OVER (PARTITION BY dX0, dV0 ORDER BY beta) AS prev_beta
        FROM df
    )
    SELECT
        dX0,
        dV0,
        MAX(CASE WHEN feasible THEN beta END) AS last_feasible_beta,
        MIN(CASE WHEN NOT feasible AND prev_feasible THEN beta END) AS first_infeasible_beta,
        SUM(CASE WHEN prev_feasible IS NOT NULL AND feasible <> prev_feasible THEN 1 ELSE 0 END) AS flips
    FROM flips
    GROUP BY dX0, dV0
    ORDER BY dX0 + dV0, dX0
    """
    return run_query(sweep, q)
