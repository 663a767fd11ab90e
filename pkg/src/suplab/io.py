"""CSV writers. Every float is printed with 17 significant digits so that a
file round-trips to the exact binary values."""

from __future__ import annotations

import os

import numpy as np

FLOAT_FMT = "%.17g"


def write_csv(path, header, columns, formats=None):
    """Write equal-length columns under a comma-separated header."""
    cols = [np.asarray(c) for c in columns]
    n = cols[0].shape[0] if cols else 0
    if any(c.shape[0] != n for c in cols):
        raise ValueError("CSV columns must have equal length")
    if formats is None:
        formats = ["%d" if np.issubdtype(c.dtype, np.integer) else FLOAT_FMT for c in cols]
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        if n:
            mixed = any(np.issubdtype(c.dtype, np.integer) for c in cols)
            table = np.column_stack([c.astype(object) if mixed else c for c in cols])
            np.savetxt(fh, table, fmt=formats, delimiter=",")


def read_csv(path):
    """Header and float data (for tests and round-trips)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data
