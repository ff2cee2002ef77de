"""CSV / JSON writers shared by the library and the command line."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    return f"{float(v):.12e}"


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], notes: dict[str, str] | None = None) -> None:
    """CSV with a '# column: meaning' comment block above the header row."""
    path = Path(path)
    with path.open("w") as fh:
        for col in columns:
            if notes and col in notes:
                fh.write(f"# {col}: {notes[col]}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_csv(path) -> dict[str, np.ndarray]:
    """Inverse of :func:`write_csv` for numeric columns."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    cols = lines[0].strip().split(",")
    data = np.array([[float(x) if x else math.nan for x in ln.strip().split(",")] for ln in lines[1:]])
    data = data.reshape(-1, len(cols))
    return {c: data[:, i] for i, c in enumerate(cols)}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
