from pathlib import Path

# Project & data paths
PROJECT_ROOT = Path(__file__).resolve().parents[1]
CONFIG_DIRECTORY = PROJECT_ROOT / "data" / "configs"
DEFAULT_OUTPUT_DIRECTORY = PROJECT_ROOT / "results"

# Output filenames
DIAGNOSTICS_FILE = "diagnostics.csv"
TRAJECTORY_FILE = "trajectories.csv"
SUMMARY_FILE = "summary.json"
CERTIFICATE_FILE = "certificate.json"
DECAY_REPORT_FILE = "decay_report.json"
MEANFIELD_FILE = "meanfield.csv"
PERTURBATION_FILE = "perturbation.csv"
SWEEP_FILE = "sweep.csv"
REPORT_FILE = "report.html"

# Diagnostics column names
COL_T = "t"
COL_DX = "dX"
COL_DV = "dV"
COL_RV = "Rv"
COL_D = "D"
COL_TAUBAR = "taubar"
COL_PSIBAR = "psibar"
DIAGNOSTICS_COLUMNS = [COL_T, COL_DX, COL_DV, COL_RV, COL_D, COL_TAUBAR, COL_PSIBAR]

# Trajectory dump columns
COL_AGENT = "agent_id"

# Float output
FLOAT_FORMAT = "%.17g"

# Environment
ENV_WORKERS = "FLOCK_WORKERS"

# Numerical tolerances
SPEED_SLACK = 1e-7  # accepted-step speed overshoot
APPEND_SPEED_SLACK = 1e-9
LIPSCHITZ_SLACK = 1e-9
DELAY_BOUND_SLACK = 1e-10
DELAY_REL_TOL = 1e-12  # tol_delay = DELAY_REL_TOL * max(1, c)
DELAY_MAX_ITERS = 100
NEWTON_REJECTIONS_BEFORE_BISECTION = 3
DECAY_SLACK = 1e-9

# Certificate search
ETA_MIN = 1e-6
ETA_MAX = 1.0 - 1e-6
ETA_GRID_POINTS = 400
EPSILON_MENU = tuple(2.0 ** -k for k in range(0, 11))
SIGMA_FACTORS = (1.1, 1.25, 1.5, 2.0)
SIGMA_OVER_ETA_WHEN_AT_REST = (0.1, 0.25, 0.5, 1.0)
SPEED_GRID_POINTS = 120
SPEED_UPPER = 1e12
SPEED_BRACKET_START = 1e-6  # c starts at s * (1 + SPEED_BRACKET_START)

# Picard defaults
PICARD_GRID = 64
PICARD_MAX_ITERS = 60
PICARD_TOL = 1e-12

# Rearrangement defaults
REARRANGEMENT_H_GRID = 1e-3

# Color constants
GRAY_1 = "#CCCCCC"
GRAY_12 = "#989898"
BLUE_1 = "#1f77b4"
ORANGE_1 = "#f59e0b"
BLUE_11 = "#0284c7"

# Run-file defaults
EXPERIMENTS = ("simulate", "certify", "flock-run", "meanfield", "sweep")
DEFAULT_SEED = 0
DEFAULT_DT = 0.01
DEFAULT_HORIZON = 10.0
DEFAULT_SAMPLE_EVERY = 1
DEFAULT_LAW_DIM = 2
DEFAULT_PICARD_T_STEP = 0.05
FLOCK_HORIZON_OVER_ETA = 20.0
DEFAULT_N_LIST = (4, 8, 16, 32)
DEFAULT_DELTAS = (0.1, 0.01, 0.001)
DEFAULT_PERTURBATION_N = 8
DEFAULT_SPEEDS = (10.0, 20.0, 40.0, 80.0)
DEFAULT_BETAS = (0.1, 0.25, 0.4, 0.5, 0.75, 1.0, 2.0)
DEFAULT_DATA_SIZES = ((0.5, 0.5), (1.0, 1.0), (4.0, 2.0))
STABILITY_BAND = 3.0  # max/min of W_T/W_0 across perturbation sizes
