"""File helpers: atomic writes and fixed-precision CSV / JSON output."""
from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

SIG_DIGITS = 12


def fmt(x) -> str:
    x = float(x)
    if x == 0.0:
        return "0"
    return f"{x:.{SIG_DIGITS}g}"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def matrix_to_csv(M, header: list[str] | None = None, preamble: list[str] | None = None) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lines = list(preamble or [])
    if header:
        lines.append(",".join(header))
    lines.extend(",".join(fmt(v) for v in row) for row in M)
    return "\n".join(lines) + "\n"


def csv_to_matrix(text: str) -> np.ndarray:
    """Numeric CSV; ``#`` lines and a non-numeric header row are skipped."""
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            if rows:
                raise ValueError(f"non-numeric row in matrix CSV: {line!r}") from None
            continue
    if not rows:
        raise ValueError("matrix CSV has no numeric rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError("ragged matrix CSV")
    return np.array(rows)


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(fmt(x))
    return obj


def dumps(obj) -> str:
    """JSON with floats rounded to 12 significant digits; inf/nan become null."""
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"
