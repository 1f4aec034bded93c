"""CSV and key-value file I/O for datasets, latent truths and run summaries.

Dataset files hold one row per sample with header `group_id,y,x1,...,xd`;
`y` repeats on every row of a group. Clouds read back with uniform weights.
"""

import os
from typing import Dict, Mapping

import numpy as np
import pandas as pd

from errors import InputError, OutputError, ParseError
from measures import from_samples
from scenarios import Dataset, Group

FLOAT_FORMAT = "%.17g"


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(parent, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create directory {parent}: {exc}") from exc


def _write_frame(frame: pd.DataFrame, path: str):
    _ensure_parent(path)
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def dataset_frame(ds: Dataset) -> pd.DataFrame:
    d = ds.dim
    rows = []
    for g in ds.groups:
        if not g.cloud.is_uniform():
            raise InputError(f"group {g.group_id}: the CSV format stores uniform clouds only")
        for point in g.cloud.points:
            rows.append([g.group_id, g.y, *point])
    columns = ["group_id", "y"] + [f"x{k + 1}" for k in range(d)]
    frame = pd.DataFrame(rows, columns=columns)
    frame["group_id"] = frame["group_id"].astype(int)
    return frame


def save_dataset(ds: Dataset, path: str) -> str:
    """
    Write a dataset split to CSV.

    Args:
        ds: dataset whose clouds are uniform
        path: output file

    Returns:
        path written
    """
    _write_frame(dataset_frame(ds), path)
    return path


def _coordinate_columns(columns, path):
    if list(columns[:2]) != ["group_id", "y"] or len(columns) < 3:
        raise ParseError(f"{path}: header must start with group_id,y and name at least one coordinate", 1)
    expected = [f"x{k + 1}" for k in range(len(columns) - 2)]
    if list(columns[2:]) != expected:
        raise ParseError(f"{path}: coordinate columns must be {','.join(expected)}", 1)
    return expected


def load_dataset(path: str, name: str = "", split: str = "") -> Dataset:
    """Read a dataset CSV; malformed rows raise ParseError with their line number."""
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc

    coords = _coordinate_columns(list(raw.columns), path)
    if raw.empty:
        raise ParseError(f"{path}: no data rows")

    numeric = raw.apply(pd.to_numeric, errors="coerce")
    bad = ~np.isfinite(numeric.to_numpy(dtype=float)).all(axis=1)
    if bad.any():
        first = int(np.argmax(bad))
        raise ParseError(f"non-numeric or missing value in {path}", first + 2)
    ids = numeric["group_id"].to_numpy()
    fractional = ids != np.round(ids)
    if fractional.any():
        raise ParseError("group_id must be an integer", int(np.argmax(fractional)) + 2)

    groups = []
    for gid, block in numeric.groupby("group_id", sort=False):
        ys = block["y"].to_numpy()
        mismatch = ys != ys[0]
        if mismatch.any():
            row = int(block.index[int(np.argmax(mismatch))]) + 2
            raise ParseError(f"group {int(gid)} has differing y values", row)
        groups.append(Group(int(gid), from_samples(block[coords].to_numpy(dtype=float)), float(ys[0])))
    return Dataset(tuple(groups), None, name, split)


def latent_frame(ds: Dataset) -> pd.DataFrame:
    if ds.latent is None:
        raise InputError("dataset carries no latent truths")
    frame = pd.DataFrame(list(ds.latent))
    frame.insert(0, "group_id", ds.group_ids)
    return frame


def save_latent(ds: Dataset, path: str) -> str:
    _write_frame(latent_frame(ds), path)
    return path


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (tuple, list, np.ndarray)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def write_text(text: str, path: str) -> str:
    _ensure_parent(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def write_record(mapping: Mapping[str, object], path: str) -> str:
    """Flat key=value text, one field per line, floats at 17 significant digits."""
    return write_text("".join(f"{key}={format_value(value)}\n" for key, value in mapping.items()), path)


def read_record(path: str) -> Dict[str, str]:
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for row, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}: expected key=value", row)
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def save_frame(frame: pd.DataFrame, path: str) -> str:
    _write_frame(frame, path)
    return path
