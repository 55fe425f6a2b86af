import pandas as pd

from backend.history import ConstantVelocity, HistoryBundle
from frontend.charts import diagnostics_chart, figure_style, trajectory_chart
from utils.chart_style import CHART_STYLE


def test_figure_style_overrides_the_shared_look():
    style = figure_style({"height": 300, "title": "Run 7"})
    assert style["height"] == 300
    assert style["title"] == "Run 7"
    assert style["font_family"] == CHART_STYLE["font_family"]
    assert figure_style()["title"] is None


def test_empty_diagnostics_keep_the_default_height():
    fig = diagnostics_chart(pd.DataFrame())
    assert fig.layout.height == CHART_STYLE["height"]
    assert len(fig.data) == 0


def test_trajectory_chart_draws_a_path_and_an_end_marker_per_agent():
    bundle = HistoryBundle([ConstantVelocity([0.0, 0.0], [0.5, 0.0]), ConstantVelocity([1.0, 1.0], [0.0, 0.5])], 1.0)
    bundle.append(0.5, [[0.25, 0.0], [1.0, 1.25]], [[0.5, 0.0], [0.0, 0.5]])
    fig = trajectory_chart(bundle, params={"show_title": False})
    assert len(fig.data) == 4
    assert list(fig.data[2].y) == [1.0, 1.25]
    assert fig.layout.xaxis.title.text == "x₁"
    assert fig.layout.title.text is None
