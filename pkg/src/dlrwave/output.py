"""File writers: convergence CSV, matrix CSV and binary PGM snapshots.

All writers go through a temporary file in the target directory followed by
an atomic rename, so readers never see partial output.
"""
from __future__ import annotations

import math
import os
import re
from pathlib import Path
import tempfile
from typing import Iterable, Optional, Sequence

import numpy as np

from .harness import ConvergenceCell

__all__ = [
    "format_sci",
    "write_csv",
    "write_matrix_csv",
    "series_range",
    "to_pixels",
    "write_pgm",
    "read_pgm",
]

CSV_HEADER = "rank,M,tau,relerr,rate,status"


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def format_sci(x: Optional[float]) -> str:
    """``8.476e-5 -> '8.476000e-5'``; None becomes ``''`` and NaN ``'NaN'``."""
    if x is None:
        return ""
    if math.isnan(x):
        return "NaN"
    mantissa, exponent = f"{x:.6e}".split("e")
    return f"{mantissa}e{int(exponent)}"


def write_csv(table: Iterable[ConvergenceCell], path) -> None:
    cells = sorted(table, key=lambda c: (c.rank, c.M))
    if not cells:
        raise ValueError("refusing to write an empty convergence table")
    lines = [CSV_HEADER]
    for c in cells:
        lines.append(
            f"{c.rank},{c.M},{format_sci(c.tau)},{format_sci(c.relerr)},{format_sci(c.rate)},{c.status}"
        )
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def write_matrix_csv(A, path) -> None:
    """One grid row per line, 17 significant digits."""
    A = np.asarray(A, dtype=float)
    lines = (",".join(f"{v:.16e}" for v in row) for row in A)
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def series_range(fields: Sequence[np.ndarray]) -> tuple[float, float]:
    """Common ``(lo, hi)`` over a series of frames."""
    return (
        float(min(np.min(f) for f in fields)),
        float(max(np.max(f) for f in fields)),
    )


def to_pixels(field, value_range: Optional[tuple[float, float]] = None) -> np.ndarray:
    """Map values linearly onto 0..255, rounding half up.

    Without `value_range` the frame's own min and max are used. A degenerate
    range (``hi == lo``) maps everything to 0.
    """
    field = np.asarray(field, dtype=float)
    if not np.isfinite(field).all():
        raise ValueError("cannot export a field with non-finite values")
    lo, hi = value_range if value_range is not None else (field.min(), field.max())
    if hi == lo:
        return np.zeros(field.shape, dtype=np.uint8)
    scaled = np.floor(255.0 * (field - lo) / (hi - lo) + 0.5)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def write_pgm(field, path, value_range: Optional[tuple[float, float]] = None) -> None:
    """Binary (P5) PGM, width = columns, height = rows, maxval 255."""
    pixels = to_pixels(field, value_range)
    rows, cols = pixels.shape
    header = f"P5\n{cols} {rows}\n255\n".encode("ascii")
    _atomic_write(path, header + pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    # exactly one whitespace byte separates maxval from the raster
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None or int(m.group(3)) != 255:
        raise ValueError(f"{path} is not an 8-bit binary PGM")
    cols, rows = int(m.group(1)), int(m.group(2))
    return np.frombuffer(data, dtype=np.uint8, count=rows * cols, offset=m.end()).reshape(rows, cols)
