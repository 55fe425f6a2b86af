import json
import logging
from pathlib import Path

import duckdb
import pandas as pd

from backend.history import HistoryBundle, dump_frame, load_dump
from utils.constants import (
    COL_AGENT,
    COL_T,
    DIAGNOSTICS_COLUMNS,
    DIAGNOSTICS_FILE,
    FLOAT_FORMAT,
    TRAJECTORY_FILE,
)
from utils.errors import UsageError
from utils.formatting import jsonable


def _validate_df(df: pd.DataFrame, required, where: str = "dataframe"):
    missing = set(required) - set(df.columns)
    if missing:
        raise UsageError(f"Missing columns in {where}: {sorted(missing)}")


def run_query(df: pd.DataFrame, q: str) -> pd.DataFrame:
    """Run a duckdb query against `df` registered as table "df"."""
    con = duckdb.connect()
    try:
        con.register("df", df)
        out = con.execute(q).df()
    finally:
        con.close()
    return out


# --------- WRITERS ---------

def write_csv(df: pd.DataFrame, path: Path) -> Path:
    """
    Write a table with 17 significant digits per float.

    Parameters:
        df: Table to write
        path: Target CSV path (parent directories are created)

    Returns:
        Path: The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logging.info("Wrote %s (%d rows)", path, len(df))
    return path


def write_json(obj, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logging.info("Wrote %s", path)
    return path


def write_diagnostics(series: pd.DataFrame, out_dir: Path) -> Path:
    _validate_df(series, DIAGNOSTICS_COLUMNS, "diagnostics series")
    return write_csv(series[DIAGNOSTICS_COLUMNS], Path(out_dir) / DIAGNOSTICS_FILE)


def write_trajectories(bundle: HistoryBundle, out_dir: Path) -> Path:
    return write_csv(dump_frame(bundle), Path(out_dir) / TRAJECTORY_FILE)


# --------- READERS ---------

def read_trajectories(path: Path, s_bound: float, speed_slack: float | None = None) -> HistoryBundle:
    """
    Reload a trajectory dump into a history bundle.

    Parameters:
        path: Trajectory CSV (agent_id, t, x_1..x_d, v_1..v_d)
        s_bound: Speed bound the histories were produced under
        speed_slack: Allowed speed overshoot (defaults to the bundle's append slack)

    Returns:
        HistoryBundle: Knots exactly as written
    """
    df = pd.read_csv(path)
    _validate_df(df, {COL_AGENT, COL_T}, str(path))
    if speed_slack is None:
        return load_dump(df, s_bound)
    return load_dump(df, s_bound, speed_slack=speed_slack)


# --------- SUMMARIES ---------

def monotone_trend(df: pd.DataFrame, key: str, value: str, strict: bool = False) -> pd.DataFrame:
    """
    Compare each row's `value` with the previous row's (ordered by `key`).

    Returns:
        pd.DataFrame: key, value, previous value, change and a `decreasing` flag
        (strict or non-strict); the first row has no previous value and counts as decreasing.
    """
    _validate_df(df, {key, value}, "trend table")
    op = "<" if strict else "<="
    q = f"""--sql
    WITH ordered AS (
        SELECT
            "{key}" AS key,
            "{value}" AS value,
            LAG("{value}") OVER (ORDER BY "{key}") AS previous
        FROM df
    )
    SELECT
        key AS "{key}",
        value AS "{value}",
        previous,
        value - previous AS change,
        COALESCE(value {op} previous, TRUE) AS decreasing
    FROM ordered
    ORDER BY key
    """
    return run_query(df, q)


def is_decreasing(df: pd.DataFrame, key: str, value: str, strict: bool = False) -> bool:
    trend = monotone_trend(df, key, value, strict=strict)
    return bool(trend["decreasing"].all())


def summarize_diagnostics(series: pd.DataFrame) -> dict:
    """Headline numbers of a run: initial/final diameters, peak delay, lowest communication rate."""
    _validate_df(series, DIAGNOSTICS_COLUMNS, "diagnostics series")
    q = """--sql
    SELECT
        FIRST(dX ORDER BY t) AS dX_initial,
        LAST(dX ORDER BY t) AS dX_final,
        MAX(dX) AS dX_max,
        FIRST(dV ORDER BY t) AS dV_initial,
        LAST(dV ORDER BY t) AS dV_final,
        MAX(Rv) AS Rv_max,
        MAX(D) AS D_max,
        MAX(taubar) AS taubar_max,
        MIN(psibar) AS psibar_min,
        COUNT(*) AS samples
    FROM df
    """
    row = run_query(series, q).iloc[0]
    return {k: (int(v) if k == "samples" else float(v)) for k, v in row.items()}
