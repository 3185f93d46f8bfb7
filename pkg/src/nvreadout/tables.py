"""
CSV output with fixed column schemas.

Floats are written with ten significant digits and rows end in a bare
newline, so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

SCHEMAS = {
    # per-slot traces; c0/c1 are mean counts, *_se their Monte Carlo standard errors
    "trace": ("variant", "N_r", "N", "c0", "c1", "c0_se", "c1_se", "signal", "F"),
    "summary": ("variant", "N_r", "B0", "F_max", "N_opt", "N_1e", "N_1e_low_confidence", "duration_us", "improvement"),
    "sweep": ("axis", "value", "variant", "N_r", "F_max", "N_opt", "improvement"),
    "calibration": ("step", "parameter", "value", "note"),
}


class SchemaMismatch(ValueError):
    pass


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return format(v, ".10g")
    if hasattr(v, "item"):  # numpy scalar
        return format_value(v.item())
    return str(v)


def render_table(schema: str, rows) -> str:
    columns = SCHEMAS[schema]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        missing = set(columns) - set(row)
        if missing:
            raise SchemaMismatch(f"{schema} row lacks {sorted(missing)}")
        w.writerow([format_value(row[c]) for c in columns])
    return buf.getvalue()


def write_table(path, schema: str, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(render_table(schema, rows))
    return path


def write_shots(path, shots_by_prep: dict) -> Path:
    """Raw Monte Carlo counts: one row per shot, one column per slot."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        n_slots = next(iter(shots_by_prep.values())).shape[1]
        w.writerow(["prep", "shot"] + [f"slot_{k}" for k in range(1, n_slots + 1)])
        for prep, shots in shots_by_prep.items():
            for i, row in enumerate(shots):
                w.writerow([prep, i] + row.tolist())
    return path


def read_table(path, required) -> list[dict]:
    """Rows of a CSV file that must contain every column in ``required``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SchemaMismatch(f"cannot read {path}: {exc.strerror}") from None
    reader = csv.DictReader(io.StringIO(text))
    if not reader.fieldnames:
        raise SchemaMismatch(f"{path} is empty")
    missing = [c for c in required if c not in reader.fieldnames]
    if missing:
        raise SchemaMismatch(f"{path} lacks columns {missing}")
    rows = list(reader)
    if not rows:
        raise SchemaMismatch(f"{path} has a header but no rows")
    return rows
