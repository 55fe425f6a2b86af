from utils.constants import BLUE_1, GRAY_12, ORANGE_1

# Shared look of every report figure
CHART_STYLE = {
    "xtick_size": 12,
    "ytick_size": 12,
    "title_size": 18,
    "legend_font_size": 13,
    "font_family": "Arial",
    "show_title": True,
    "height": 450,
}

# Per-series look: observed quantities solid, certified envelopes dashed
SERIES_STYLE = {
    "dV": dict(color=BLUE_1, width=2, dash="solid"),
    "D": dict(color=ORANGE_1, width=2, dash="solid"),
    "dV_envelope": dict(color=BLUE_1, width=1, dash="dash"),
    "D_envelope": dict(color=ORANGE_1, width=1, dash="dash"),
    "WT": dict(color=BLUE_1, width=2, dash="solid"),
    "W0": dict(color=GRAY_12, width=2, dash="dot"),
}
