"""CSV/JSON readers for the simulation artifacts.

Files carry leading `#` provenance comments; data cells may be empty (the
encoding of infinity), which reads back as NaN.  Schema problems raise
SchemaError naming the offending column or key.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path


class SchemaError(ValueError):
    """Input file does not match the producing subcommand's schema."""


def read_table(path, required: list, numeric: bool = True) -> dict:
    """Read a comment-headed CSV into {column: list}.

    Checks that every `required` column exists; an empty table is an error,
    since every producer writes at least one row.
    """
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        for line in fh:
            if not line.startswith("#"):
                rows.append(line)
    if not rows or not rows[0].strip():
        raise SchemaError(f"{path.name}: no header row found")
    reader = csv.reader(rows)
    header = next(reader)
    missing = [col for col in required if col not in header]
    if missing:
        raise SchemaError(
            f"{path.name}: missing column(s) {', '.join(repr(c) for c in missing)}"
        )
    data: dict = {col: [] for col in header}
    for record in reader:
        if not record:
            continue
        for col, cell in zip(header, record):
            if numeric and col != "direction":
                data[col].append(math.nan if cell == "" else float(cell))
            else:
                data[col].append(cell)
    if not data[header[0]]:
        raise SchemaError(f"{path.name}: table has no data rows")
    return data


def read_fit(path) -> dict:
    """Read a decay-fit JSON record {model, rate, r2, support}."""
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("model", "rate", "r2", "support"):
        if key not in doc:
            raise SchemaError(f"{path.name}: missing key {key!r}")
    return doc


def axis_columns(data: dict, prefix: str) -> list:
    """Names like x_1..x_d present in the table, in axis order."""
    cols = []
    i = 1
    while f"{prefix}{i}" in data:
        cols.append(f"{prefix}{i}")
        i += 1
    if not cols:
        raise SchemaError(f"missing column {prefix}1")
    return cols
