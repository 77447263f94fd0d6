"""Plain-text matrix files.

Format: first line ``# dims m n``, optional further ``#`` comment lines,
then ``m`` rows of ``n`` comma-separated decimals written with 17
significant digits so float64 values round-trip exactly.
"""

from __future__ import annotations

import io
import os

import numpy as np


def format_matrix(a, comments=()) -> str:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    m, n = a.shape
    buf = io.StringIO()
    buf.write(f"# dims {m} {n}\n")
    for c in comments:
        buf.write(f"# {c}\n")
    for row in a:
        buf.write(",".join(f"{v:.17g}" for v in row))
        buf.write("\n")
    return buf.getvalue()


def save_matrix(path, a, comments=()) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_matrix(a, comments))


def parse_matrix(text: str) -> np.ndarray:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError("matrix file must start with '# dims m n'")
    head = lines[0].lstrip("#").split()
    if len(head) != 3 or head[0] != "dims":
        raise ValueError(f"bad header line: {lines[0]!r}")
    m, n = int(head[1]), int(head[2])
    rows = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("#")]
    if len(rows) != m:
        raise ValueError(f"header declares {m} rows, found {len(rows)}")
    a = np.array([[float(v) for v in r.split(",")] for r in rows], dtype=np.float64)
    if a.shape != (m, n):
        raise ValueError(f"header declares {m}x{n}, data is {a.shape[0]}x{a.shape[1]}")
    return a.reshape(m, n)


def load_matrix(path: str | os.PathLike) -> np.ndarray:
    with open(path, encoding="ascii") as fh:
        return parse_matrix(fh.read())
