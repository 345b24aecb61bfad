"""Load and validate spectral-efficiency sweep CSVs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import pandas as pd

REQUIRED_COLUMNS = ["seed", "arch", "M", "N", "K", "Q", "tau_up", "min_se", "avg_se"]
AXIS_COLUMNS = {"N": "N", "M": "M", "K": "K"}


class SchemaError(ValueError):
    """The CSV does not match the sweep schema."""


@dataclass(frozen=True)
class SweepTable:
    """Validated sweep results: one row per (seed, architecture, axis value)."""

    frame: pd.DataFrame

    @property
    def architectures(self) -> list[str]:
        return list(dict.fromkeys(self.frame["arch"]))


def load_table(path: str | Path, axis: str) -> SweepTable:
    if axis not in AXIS_COLUMNS:
        raise SchemaError(f"axis must be one of {sorted(AXIS_COLUMNS)}, got {axis!r}")
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError as exc:
        raise SchemaError(f"{path} is empty: no header row") from exc
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path} is missing required columns: {', '.join(missing)}")
    if frame.empty:
        raise SchemaError(f"{path} has no data rows")
    numeric = [c for c in REQUIRED_COLUMNS if c != "arch"]
    for column in numeric:
        converted = pd.to_numeric(frame[column], errors="coerce")
        if converted.isna().any():
            raise SchemaError(f"column {column!r} holds non-numeric values")
        frame[column] = converted
    key = frame[["seed", "arch", AXIS_COLUMNS[axis]]]
    if key.duplicated().any():
        raise SchemaError("duplicate (seed, arch, axis value) rows")
    return SweepTable(frame)


def median_iqr_curves(table: SweepTable, axis: str):
    """Per architecture: sorted axis values with median/quartile avg-SE across seeds."""
    col = AXIS_COLUMNS[axis]
    curves = {}
    for arch, group in table.frame.groupby("arch", sort=False):
        stats = (
            group.groupby(col)["avg_se"]
            .agg(median="median", q1=lambda s: s.quantile(0.25), q3=lambda s: s.quantile(0.75))
            .sort_index()
        )
        curves[arch] = stats
    return curves
