from __future__ import annotations

import html
import logging
from pathlib import Path
from typing import Any, Dict

import pandas as pd

from backend.data_processing import summarize_diagnostics
from frontend.charts import (
    convergence_chart,
    diagnostics_chart,
    perturbation_chart,
    sweep_chart,
    trajectory_chart,
)
from utils.chart_style import CHART_STYLE
from utils.formatting import format_short


def compute_run_view(
    experiment: str,
    *,
    series: pd.DataFrame | None = None,
    bundle=None,
    certificate=None,
    convergence: pd.DataFrame | None = None,
    perturbation: pd.DataFrame | None = None,
    sweep: pd.DataFrame | None = None,
    sweep_kind: str | None = None,
    show_title: bool = CHART_STYLE["show_title"],
    height: int = CHART_STYLE["height"],
    **kwargs,
) -> Dict[str, Any]:
    """
    Figures and headline numbers for the static report of one run.

    Parameters:
        experiment: Experiment name (report title)
        series: Diagnostics series of a simulation, if any
        bundle: History bundle for the trajectory figure, if any
        certificate: FlockingCertificate whose envelopes are drawn, if any
        convergence, perturbation: Mean-field study tables, if any
        sweep, sweep_kind: Sweep table and its kind, if any

    Returns:
        dict: title, headline (label -> text) and figures (list of plotly figures)
    """
    params = {"show_title": show_title, "height": height, **kwargs}
    headline, figures = {}, []

    if series is not None and not series.empty:
        stats = summarize_diagnostics(series)
        headline["d_V at start"] = format_short(stats["dV_initial"])
        headline["d_V at end"] = format_short(stats["dV_final"])
        headline["largest delay"] = format_short(stats["taubar_max"])
        headline["samples"] = str(stats["samples"])
        if certificate is not None:
            headline["c*"] = format_short(certificate.c_star)
            headline["η"] = format_short(certificate.eta)
            figures.append(diagnostics_chart(series, certificate.eta, certificate.sigma, certificate.kappa, params))
        else:
            figures.append(diagnostics_chart(series, params=params))
    if bundle is not None:
        figures.append(trajectory_chart(bundle, params))
    if convergence is not None and not convergence.empty:
        last = convergence.iloc[-1]
        headline[f"W_T at N={int(last['N'])}"] = format_short(last["WT"])
        figures.append(convergence_chart(convergence, params))
    if perturbation is not None and not perturbation.empty:
        headline["largest W_T/W_0"] = format_short(perturbation["ratio"].max())
        figures.append(perturbation_chart(perturbation, params))
    if sweep is not None:
        headline["sweep rows"] = str(len(sweep))
        figures.append(sweep_chart(sweep, sweep_kind or "", params))

    return dict(title=f"Flocking run: {experiment}", headline=headline, figures=figures)


def write_report(view: Dict[str, Any], path: Path) -> Path:
    """Static HTML page: a headline table followed by every figure (plotly.js inlined once)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = "\n".join(
        f"<tr><th>{html.escape(label)}</th><td>{html.escape(value)}</td></tr>"
        for label, value in view["headline"].items()
    )
    parts = [
        fig.to_html(full_html=False, include_plotlyjs=(k == 0))
        for k, fig in enumerate(view["figures"])
    ]
    page = (
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
        f"<title>{html.escape(view['title'])}</title></head>\n<body>\n"
        f"<h1>{html.escape(view['title'])}</h1>\n<table>\n{rows}\n</table>\n"
        + "\n".join(parts)
        + "\n</body></html>\n"
    )
    path.write_text(page, encoding="utf-8")
    logging.info("Wrote report %s (%d figures)", path, len(parts))
    return path
