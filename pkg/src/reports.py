"""CSV report writing with byte-stable float formatting."""

import math
from pathlib import Path

import pandas as pd

FLOAT_FORMAT = "%.10g"


def format_metric(value: float | None) -> str:
    """Render a metric; +inf becomes "inf" and missing values "empty"."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "empty"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return FLOAT_FORMAT % value


def write_csv(frame: pd.DataFrame, path: Path | str) -> Path:
    """Write a DataFrame without its index, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path
