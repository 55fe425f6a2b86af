from __future__ import annotations

import numpy as np
import pandas as pd
import plotly.graph_objects as go

from backend.history import HistoryBundle
from utils.chart_style import CHART_STYLE, SERIES_STYLE
from utils.constants import BLUE_1, BLUE_11, COL_D, COL_DV, COL_T, GRAY_1, GRAY_12, ORANGE_1

# agent colours cycle through these
AGENT_COLORS = (BLUE_1, ORANGE_1, BLUE_11, GRAY_12)


def figure_style(overrides: dict | None = None) -> dict:
    """CHART_STYLE plus a title slot, updated with the caller's overrides."""
    return {**CHART_STYLE, "title": None, **(overrides or {})}


def _layout(params: dict, default_title: str, x_title: str, y_title: str, y_log: bool = False, x_log: bool = False,
            **options) -> dict:
    font_family = params["font_family"]
    layout_args = {
        "height": params["height"],
        "plot_bgcolor": "white",
        "paper_bgcolor": "white",
        "margin": dict(l=70, r=30, t=80 if params["show_title"] else 20, b=50),
        "legend": dict(
            orientation="h",
            yanchor="bottom", y=1.02,
            xanchor="right", x=1,
            font=dict(size=params["legend_font_size"], family=font_family),
        ),
        "xaxis": dict(
            title=x_title,
            type="log" if x_log else "linear",
            showline=True, linecolor=GRAY_12,
            tickfont=dict(color=GRAY_12, size=params["xtick_size"], family=font_family),
            automargin=True,
        ),
        "yaxis": dict(
            title=y_title,
            type="log" if y_log else "linear",
            showline=True, linecolor=GRAY_12,
            gridcolor=GRAY_1,
            tickfont=dict(color=GRAY_12, size=params["ytick_size"], family=font_family),
            automargin=True,
        ),
        **options,
    }
    if params["show_title"]:
        layout_args["title"] = dict(
            text=params["title"] or default_title,
            font=dict(size=params["title_size"], family=font_family),
        )
    return layout_args


def _positive(values: pd.Series) -> pd.Series:
    # log axes drop zeros; exact alignment shows up as a gap
    return values.where(values > 0.0)


def diagnostics_chart(series: pd.DataFrame, eta=None, sigma=None, kappa=None, params=None, **options):
    """
    Velocity diameter and delayed-velocity gap on a log scale, with the certified
    envelopes sigma e^{-eta t} and kappa e^{-eta t} when a certificate is given.

    Parameters:
        series: Diagnostics series (t, dX, dV, Rv, D, taubar, psibar)
        eta, sigma, kappa: Certified rate and envelope constants, or None
        params: Overrides of figure_style
    """
    params = figure_style(params)
    fig = go.Figure()
    if series is None or series.empty:
        fig.update_layout(**_layout(params, "Flocking diagnostics", "t", "diameter", **options))
        return fig

    t = series[COL_T]
    for name, label in ((COL_DV, "d_V(t)"), (COL_D, "D(t)")):
        fig.add_trace(go.Scatter(
            x=t,
            y=_positive(series[name]),
            name=label,
            mode="lines",
            line=SERIES_STYLE[name],
            hovertemplate=f"t=%{{x:.4g}}<br>{label}=%{{y:.4e}}<extra></extra>",
        ))
    if eta is not None:
        decay = np.exp(-eta * t.to_numpy())
        for name, const, label in ((COL_DV, sigma, "σ e^{-ηt}"), (COL_D, kappa, "κ e^{-ηt}")):
            if const is None:
                continue
            fig.add_trace(go.Scatter(
                x=t,
                y=const * decay,
                name=label,
                mode="lines",
                line=SERIES_STYLE[f"{name}_envelope"],
                hoverinfo="skip",
            ))
    fig.update_layout(**_layout(params, "Velocity alignment", "t", "value (log scale)", y_log=True, **options))
    return fig


def convergence_chart(table: pd.DataFrame, params=None, **options):
    """Transport distances W_0 and W_T between consecutive particle counts."""
    params = figure_style(params)
    fig = go.Figure()
    if table is not None and not table.empty:
        for name, label in (("WT", "W_T(ρ_N, ρ_next)"), ("W0", "W_0(ρ_N, ρ_next)")):
            fig.add_trace(go.Scatter(
                x=table["N"],
                y=_positive(table[name]),
                name=label,
                mode="lines+markers",
                line=SERIES_STYLE[name],
                hovertemplate="N=%{x}<br>%{y:.4e}<extra></extra>",
            ))
    fig.update_layout(**_layout(params, "Particle-count convergence", "N", "distance (log scale)", y_log=True,
                                x_log=True, **options))
    return fig


def perturbation_chart(table: pd.DataFrame, params=None, **options):
    """Amplification W_T / W_0 against the perturbation size."""
    params = figure_style(params)
    fig = go.Figure()
    if table is not None and not table.empty:
        fig.add_trace(go.Scatter(
            x=table["delta"],
            y=table["ratio"],
            name="W_T / W_0",
            mode="lines+markers",
            line=SERIES_STYLE["WT"],
            hovertemplate="δ=%{x:.3g}<br>ratio=%{y:.4g}<extra></extra>",
        ))
    fig.update_layout(**_layout(params, "Stability under perturbation", "δ", "W_T / W_0", x_log=True, **options))
    return fig


def sweep_chart(table: pd.DataFrame, kind: str, params=None, **options):
    """One figure per sweep kind: feasibility map (beta), distance to the undelayed run (speed), step differences (order)."""
    params = figure_style(params)
    fig = go.Figure()
    if table is None or table.empty:
        fig.update_layout(**_layout(params, "Sweep", "", "", **options))
        return fig
    if kind == "beta":
        for (dX0, dV0), group in table.groupby(["dX0", "dV0"], sort=True):
            fig.add_trace(go.Scatter(
                x=group["beta"],
                y=group["c_star"],
                name=f"dX0={dX0:g}, dV0={dV0:g}",
                mode="lines+markers",
                hovertemplate="β=%{x:.3g}<br>c*=%{y:.4g}<extra></extra>",
            ))
        fig.update_layout(**_layout(params, "Critical speed by kernel decay", "β", "c* (log scale)", y_log=True, **options))
    elif kind == "speed":
        fig.add_trace(go.Scatter(
            x=table["c"],
            y=table["total"],
            name="sup distance",
            mode="lines+markers",
            line=SERIES_STYLE["WT"],
        ))
        fig.update_layout(**_layout(params, "Distance to the undelayed model", "c", "distance (log scale)", y_log=True,
                                    x_log=True, **options))
    else:
        fig.add_trace(go.Scatter(
            x=table["dt"],
            y=table["difference_to_next"],
            name="|y(dt) - y(dt/2)|",
            mode="lines+markers",
            line=SERIES_STYLE["dV"],
        ))
        fig.update_layout(**_layout(params, "Step-size refinement", "dt", "difference (log scale)", y_log=True,
                                    x_log=True, **options))
    return fig


def trajectory_chart(bundle: HistoryBundle, params=None, max_agents: int = 50, **options):
    """
    Agent paths from the stored knots: x against t in one dimension, the plane path in two.
    Higher dimensions show the first two coordinates.
    """
    params = figure_style(params)
    fig = go.Figure()
    t = bundle.knot_times
    X = bundle.positions
    planar = bundle.dim >= 2
    for i in range(min(bundle.n_agents, max_agents)):
        color = AGENT_COLORS[i % len(AGENT_COLORS)]
        fig.add_trace(go.Scatter(
            x=X[:, i, 0] if planar else t,
            y=X[:, i, 1] if planar else X[:, i, 0],
            name=f"agent {i}",
            mode="lines",
            line=dict(color=color, width=1),
            showlegend=bundle.n_agents <= 10,
        ))
        fig.add_trace(go.Scatter(
            x=[X[-1, i, 0] if planar else t[-1]],
            y=[X[-1, i, 1] if planar else X[-1, i, 0]],
            mode="markers",
            marker=dict(color=color, size=6),
            showlegend=False,
            hoverinfo="skip",
        ))
    x_title, y_title = ("x₁", "x₂") if planar else ("t", "x")
    fig.update_layout(**_layout(params, "Agent trajectories", x_title, y_title, **options))
    return fig
