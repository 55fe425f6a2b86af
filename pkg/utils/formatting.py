"""
Number formatting helpers shared by the CSV/JSON writers and the console summary.
"""

import logging
import math

import numpy as np


def format_float(value) -> str:
    """
    Format a float with 17 significant digits (round-trip exact).

    Parameters:
        value: Number to format

    Returns:
        str: Formatted number string ("inf"/"nan" kept readable)
    """
    try:
        x = float(value)
    except (TypeError, ValueError):
        return str(value)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def format_short(value, digits: int = 6) -> str:
    """Compact form for console tables."""
    try:
        return f"{float(value):.{digits}g}"
    except (TypeError, ValueError):
        return str(value)


def jsonable(obj):
    """
    Convert numpy scalars/arrays, tuples and non-finite floats into plain JSON values.

    Non-finite floats become the strings "inf", "-inf" or "nan" so the output
    stays strict JSON.
    """
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return format_float(obj)
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    logging.debug("jsonable(): falling back to str() for %r", type(obj))
    return str(obj)
