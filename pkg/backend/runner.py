"""
Experiment orchestration: one function per experiment type, each writing its
artifacts and a summary.json with the invariant-check counts.

Exit status: 0 ok, 1 an invariant check failed, 3 no certificate exists.
Config and usage errors surface as exceptions (exit 2 in main.py).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from backend.certificate import beta_sweep, certify, feasibility_boundary
from backend.config import (
    STUDY_BOTH,
    STUDY_CONVERGENCE,
    STUDY_PERTURBATION,
    SWEEP_BETA,
    SWEEP_SPEED,
    RunConfig,
)
from backend.data_processing import (
    is_decreasing,
    monotone_trend,
    summarize_diagnostics,
    write_csv,
    write_diagnostics,
    write_json,
    write_trajectories,
)
from backend.delay import pair_delays_at
from backend.diagnostics import check_decay, check_delay_integral, check_diameter, check_shrinkage, fit_decay_rate, observe
from backend.dynamics import DELAY_INSTANTANEOUS, SimState, richardson_order, simulate, trajectory_distance
from backend.history import HistoryBundle, initial_velocity_lipschitz
from backend.influence import InfluenceFunction
from backend.meanfield import particle_convergence_study, perturbation_study
from utils.constants import (
    CERTIFICATE_FILE,
    DECAY_REPORT_FILE,
    DECAY_SLACK,
    MEANFIELD_FILE,
    PERTURBATION_FILE,
    REPORT_FILE,
    STABILITY_BAND,
    SUMMARY_FILE,
    SWEEP_FILE,
)
from utils.errors import InfeasibleError
from utils.parallel import resolve_workers

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_INFEASIBLE = InfeasibleError.exit_status


@dataclass
class RunOutcome:
    experiment: str
    exit_status: int
    out_dir: Path
    artifacts: dict[str, Path] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


# --------- SHARED PIECES ---------

def initial_data_sizes(segments, s: float, c: float | None = None, kernel: InfluenceFunction | None = None) -> dict:
    """
    dX0, dV0, L_v0 and D0 of the initial data.

    D0 is measured at t = 0 when c and the kernel are known. Otherwise it is bounded
    by the largest change of any agent's past velocity relative to v(0), valid for every c.
    """
    X0 = np.stack([seg.x_at_zero for seg in segments])
    V0 = np.stack([seg.velocity(0.0)[0] for seg in segments])
    n = len(segments)
    dX0 = float(np.max(np.linalg.norm(X0[:, None] - X0[None], axis=2))) if n > 1 else 0.0
    dV0 = float(np.max(np.linalg.norm(V0[:, None] - V0[None], axis=2))) if n > 1 else 0.0
    L_v0 = initial_velocity_lipschitz(segments)
    if all(seg.is_constant for seg in segments) or n < 2:
        D0 = 0.0
    elif c is not None and kernel is not None:
        delays = pair_delays_at(HistoryBundle(segments, s), 0.0, X0, V0, c)
        D0 = observe(SimState(0.0, X0, V0), delays, kernel)["D"]
    else:
        D0 = max(float(np.max(np.linalg.norm(seg.velocity(seg.knot_times) - seg.velocity(0.0), axis=1))) for seg in segments)
    return {"dX0": dX0, "dV0": dV0, "L_v0": L_v0, "D0": float(D0)}


def _certificate(config: RunConfig, sizes: dict):
    menus = dict(config.certificate)
    eta = menus.pop("eta")
    menus.pop("horizon_over_eta")
    if menus.get("sigma_values") is None:
        menus.pop("sigma_values")
    return certify(config.kernel, sizes["dX0"], sizes["dV0"], config.s, sizes["L_v0"], sizes["D0"], eta=eta, **menus)


def _sampled_checks(result, sizes: dict) -> dict:
    series = result.diagnostics
    cfg = result.config
    alignment = cfg.n_agents * cfg.coupling
    reports = [
        check_diameter(series),
        check_shrinkage(series, alignment),
        check_delay_integral(series, sizes["L_v0"]),
    ]
    return {r.name: r.as_dict() for r in reports}


def _check_counts(ledger: dict, extra: list[bool] = ()) -> dict:
    checked = ledger["delay_bound"]["checked"] + ledger["speed_bound"]["checked"] + len(extra)
    failed = ledger["delay_bound"]["failed"] + ledger["speed_bound"]["failed"] + sum(not ok for ok in extra)
    return {"checked": checked, "failed": failed, "passed": checked - failed}


def _write_report(config: RunConfig, out_dir: Path, **views) -> Path | None:
    if not config.plots:
        return None
    from frontend.viewmodels import compute_run_view, write_report

    return write_report(compute_run_view(config.experiment, **views), Path(out_dir) / REPORT_FILE)


def _finish(config: RunConfig, out_dir: Path, artifacts: dict, summary: dict, status: int, started: float) -> RunOutcome:
    summary = {
        "experiment": config.experiment,
        "exit_status": status,
        "config": config.echo(),
        "wall_time": time.perf_counter() - started,
        **summary,
    }
    artifacts["summary"] = write_json(summary, out_dir / SUMMARY_FILE)
    logging.info("%s finished with exit status %d; artifacts in %s", config.experiment, status, out_dir)
    return RunOutcome(config.experiment, status, out_dir, artifacts, summary)


# --------- EXPERIMENTS ---------

def run_simulate(config: RunConfig, out_dir: Path, started: float) -> RunOutcome:
    segments = config.segments()
    sim = config.sim_config(len(segments))
    result = simulate(sim, segments)
    sizes = initial_data_sizes(segments, sim.s, sim.c, sim.kernel)
    ledger = result.ledger.as_dict()
    artifacts = {
        "diagnostics": write_diagnostics(result.diagnostics, out_dir),
        "trajectories": write_trajectories(result.bundle, out_dir),
    }
    report = _write_report(config, out_dir, series=result.diagnostics, bundle=result.bundle)
    if report is not None:
        artifacts["report"] = report
    counts = _check_counts(ledger)
    summary = {
        "run": result.summary(),
        "initial_data": sizes,
        "diagnostics": summarize_diagnostics(result.diagnostics),
        "sampled_checks": _sampled_checks(result, sizes),
        "invariant_checks": counts,
    }
    status = EXIT_INVARIANT if counts["failed"] else EXIT_OK
    return _finish(config, out_dir, artifacts, summary, status, started)


def run_certify(config: RunConfig, out_dir: Path, started: float) -> RunOutcome:
    segments = config.segments()
    sizes = initial_data_sizes(segments, config.s, config.c, config.kernel)
    artifacts = {}
    try:
        cert = _certificate(config, sizes)
    except InfeasibleError as exc:
        logging.warning("No certificate: %s", exc)
        body = {"feasible": False, "reason": str(exc), "inputs": sizes, "report": exc.report}
        artifacts["certificate"] = write_json(body, out_dir / CERTIFICATE_FILE)
        return _finish(config, out_dir, artifacts, {"feasible": False, "initial_data": sizes}, EXIT_INFEASIBLE, started)
    body = {"feasible": True, **cert.as_dict()}
    artifacts["certificate"] = write_json(body, out_dir / CERTIFICATE_FILE)
    holds = cert.holds_at()
    summary = {
        "feasible": True,
        "initial_data": sizes,
        "c_star": cert.c_star,
        "eta": cert.eta,
        "invariant_checks": {"checked": 1, "failed": int(not holds), "passed": int(holds)},
    }
    return _finish(config, out_dir, artifacts, summary, EXIT_OK if holds else EXIT_INVARIANT, started)


def run_flock(config: RunConfig, out_dir: Path, started: float) -> RunOutcome:
    """Certify, simulate at c* to horizon horizon_over_eta / eta, check the exponential envelopes."""
    segments = config.segments()
    # D0 bounded independently of c: the run happens at c*, not at model.c
    sizes = initial_data_sizes(segments, config.s)
    artifacts = {}
    try:
        cert = _certificate(config, sizes)
    except InfeasibleError as exc:
        logging.warning("No certificate, nothing to run: %s", exc)
        body = {"feasible": False, "reason": str(exc), "inputs": sizes, "report": exc.report}
        artifacts["certificate"] = write_json(body, out_dir / CERTIFICATE_FILE)
        return _finish(config, out_dir, artifacts, {"feasible": False, "initial_data": sizes}, EXIT_INFEASIBLE, started)
    artifacts["certificate"] = write_json({"feasible": True, **cert.as_dict()}, out_dir / CERTIFICATE_FILE)

    horizon = config.certificate["horizon_over_eta"] / cert.eta
    picard = config.picard
    if picard is not None and not (config.s < picard.m < cert.c_star):
        picard = replace(picard, m=0.5 * (config.s + cert.c_star))
    sim = config.sim_config(len(segments), c=cert.c_star, horizon=horizon, picard=picard)
    logging.info("Certified run at c*=%.6g to T=%.4g", cert.c_star, horizon)
    result = simulate(sim, segments)

    decay = check_decay(result.diagnostics, cert.eta, cert.sigma, cert.kappa, slack=DECAY_SLACK)
    rate_dV, r2_dV = fit_decay_rate(result.diagnostics, "dV")
    rate_D, r2_D = fit_decay_rate(result.diagnostics, "D")
    decay_report = {
        **decay.as_dict(),
        "c_star": cert.c_star,
        "horizon": horizon,
        "fitted_rate": {"dV": {"slope": rate_dV, "r_squared": r2_dV}, "D": {"slope": rate_D, "r_squared": r2_D}},
        "certified_rate": -cert.eta,
    }
    artifacts["decay_report"] = write_json(decay_report, out_dir / DECAY_REPORT_FILE)
    artifacts["diagnostics"] = write_diagnostics(result.diagnostics, out_dir)
    report = _write_report(config, out_dir, series=result.diagnostics, bundle=result.bundle, certificate=cert)
    if report is not None:
        artifacts["report"] = report

    ledger = result.ledger.as_dict()
    counts = _check_counts(ledger, [decay.holds])
    summary = {
        "feasible": True,
        "run": result.summary(),
        "initial_data": sizes,
        "diagnostics": summarize_diagnostics(result.diagnostics),
        "decay_holds": decay.holds,
        "invariant_checks": counts,
    }
    status = EXIT_INVARIANT if counts["failed"] else EXIT_OK
    return _finish(config, out_dir, artifacts, summary, status, started)


def run_meanfield(config: RunConfig, out_dir: Path, started: float) -> RunOutcome:
    workers = resolve_workers(config.workers)
    study = config.meanfield["study"]
    template = config.sim_config(n_agents=config.meanfield["n_list"][0])
    artifacts, summary = {}, {}
    convergence = perturbation = None
    studies = []

    if study in (STUDY_CONVERGENCE, STUDY_BOTH):
        result = particle_convergence_study(config.law, config.meanfield["n_list"], template, workers)
        studies.append(result)
        convergence = result.table
        artifacts["meanfield"] = write_csv(convergence, out_dir / MEANFIELD_FILE)
        trend = monotone_trend(convergence, "N", "WT")
        summary["convergence"] = {
            "WT_nonincreasing": bool(trend["decreasing"].all()),
            "W0_nonincreasing": is_decreasing(convergence, "N", "W0"),
            "rows": len(convergence),
        }
    if study in (STUDY_PERTURBATION, STUDY_BOTH):
        result = perturbation_study(config.law, config.meanfield["n"], config.meanfield["deltas"], template, workers)
        studies.append(result)
        perturbation = result.table
        artifacts["perturbation"] = write_csv(perturbation, out_dir / PERTURBATION_FILE)
        ratios = perturbation["ratio"].dropna()
        spread = float(ratios.max() / ratios.min()) if len(ratios) and ratios.min() > 0.0 else math.nan
        summary["perturbation"] = {
            "ratio_min": float(ratios.min()) if len(ratios) else math.nan,
            "ratio_max": float(ratios.max()) if len(ratios) else math.nan,
            "ratio_spread": spread,
            "within_band": bool(spread <= STABILITY_BAND),
            "band": STABILITY_BAND,
        }
    report = _write_report(config, out_dir, convergence=convergence, perturbation=perturbation)
    if report is not None:
        artifacts["report"] = report
    checked = sum(r.checked for r in studies)
    failed = sum(r.failed for r in studies)
    summary["invariant_checks"] = {"checked": checked, "failed": failed, "passed": checked - failed}
    summary["first_failure"] = next((r.first_failure for r in studies if r.first_failure), None)
    summary["workers"] = workers
    status = EXIT_INVARIANT if failed else EXIT_OK
    return _finish(config, out_dir, artifacts, summary, status, started)


def _speed_sweep(config: RunConfig) -> tuple[pd.DataFrame, dict]:
    segments = config.segments()
    n = len(segments)
    classical = simulate(config.sim_config(n, c=max(config.sweep["speeds"]), delay_model=DELAY_INSTANTANEOUS), segments)
    rows, failures = [], 0
    for c in config.sweep["speeds"]:
        result = simulate(config.sim_config(n, c=c), segments)
        failures += result.ledger.failed
        gap = trajectory_distance(result, classical)
        rows.append({"c": float(c), **gap})
        logging.info("c=%g: distance to the undelayed run %.4g", c, gap["total"])
    table = pd.DataFrame(rows)
    decreasing = is_decreasing(table, "c", "total", strict=True)
    return table, {"strictly_decreasing": decreasing, "ledger_failures": failures}


def run_sweep(config: RunConfig, out_dir: Path, started: float) -> RunOutcome:
    kind = config.sweep["kind"]
    artifacts, summary = {}, {"kind": kind}
    status = EXIT_OK
    if kind == SWEEP_BETA:
        table = beta_sweep(config.sweep["betas"], config.sweep["data_sizes"], s=config.s,
                           grid_points=config.certificate["eta_grid_points"])
        boundary = feasibility_boundary(table)
        summary["boundary"] = boundary.to_dict(orient="records")
        summary["feasible_cases"] = int(table["feasible"].sum())
    elif kind == SWEEP_SPEED:
        table, facts = _speed_sweep(config)
        summary.update(facts)
        checks = [facts["strictly_decreasing"], facts["ledger_failures"] == 0]
        failed = sum(not ok for ok in checks)
        summary["invariant_checks"] = {"checked": len(checks), "failed": failed, "passed": len(checks) - failed}
        if summary["invariant_checks"]["failed"]:
            status = EXIT_INVARIANT
    else:
        segments = config.segments()
        dts = tuple(config.sweep["dts"]) if config.sweep["dts"] else None
        order = richardson_order(config.sim_config(len(segments)), segments, dts)
        # difference between the run at dt and the run at the next smaller dt
        table = pd.DataFrame({"dt": order["dts"], "difference_to_next": order["differences"] + [math.nan]})
        summary["order"] = order
        failed = order["ledger_failures"]
        checked = order["ledger_checked"]
        summary["invariant_checks"] = {"checked": checked, "failed": failed, "passed": checked - failed}
        if failed:
            status = EXIT_INVARIANT
    artifacts["sweep"] = write_csv(table, out_dir / SWEEP_FILE)
    report = _write_report(config, out_dir, sweep=table, sweep_kind=kind)
    if report is not None:
        artifacts["report"] = report
    return _finish(config, out_dir, artifacts, summary, status, started)


EXPERIMENT_RUNNERS = {
    "simulate": run_simulate,
    "certify": run_certify,
    "flock-run": run_flock,
    "meanfield": run_meanfield,
    "sweep": run_sweep,
}


def run(config: RunConfig) -> RunOutcome:
    """
    Dispatch the configured experiment and write its artifacts.

    Returns:
        RunOutcome: exit status, output directory, written paths and the summary
    """
    started = time.perf_counter()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logging.info("Running %s (seed %d) into %s", config.experiment, config.seed, out_dir)
    return EXPERIMENT_RUNNERS[config.experiment](config, out_dir, started)
