"""Sample table I/O, min-max scaling and mean-split binarization."""

from __future__ import annotations

import os

import numpy as np
import pandas as pd

SAMPLE_COLUMNS = ["n_crowding", "d_crowding", "n_stopping", "t_stopping", "t_total_stop",
                  "sigma_spaces", "c_new", "e_ave"]
BEHAVIORAL_FACTORS = ["n_crowding", "d_crowding", "n_stopping", "t_stopping"]


class ScalingError(ValueError):
    pass


def validate_table(table: pd.DataFrame) -> pd.DataFrame:
    missing = [c for c in SAMPLE_COLUMNS if c not in table.columns]
    if missing:
        raise ValueError(f"sample table lacks columns {missing}")
    sub = table[SAMPLE_COLUMNS]
    bad = sub.columns[sub.isna().any()].tolist()
    if bad:
        raise ValueError(f"missing values in columns {bad}")
    return sub.astype(float).reset_index(drop=True)


def read_sample_table(path: str | os.PathLike) -> pd.DataFrame:
    """Read a sample table CSV; extra columns are dropped."""
    return validate_table(pd.read_csv(path))


def write_sample_table(table: pd.DataFrame, path: str | os.PathLike) -> None:
    validate_table(table).to_csv(path, index=False)


def min_max_scale(table: pd.DataFrame, columns=None) -> pd.DataFrame:
    """Map each column to [0, 1] by (x - min) / (max - min)."""
    cols = list(table.columns if columns is None else columns)
    out = table.copy()
    for c in cols:
        x = table[c].to_numpy(dtype=float)
        lo, hi = x.min(), x.max()
        if not hi > lo:
            raise ScalingError(f"column {c!r} is constant ({lo}); cannot min-max scale")
        out[c] = (x - lo) / (hi - lo)
    return out


def binarize(values) -> np.ndarray:
    """1 where a value is strictly above the column mean, else 0."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("cannot binarize an empty column")
    return (x > x.mean()).astype(np.int64)
