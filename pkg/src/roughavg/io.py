"""Rough-path serialization: a little-endian binary layout and a CSV layout.

Both hold a header ``(d, N, T, alpha, start)`` followed by the ``N + 1``
level-1 rows and the ``N`` level-2 cells (row-major).  Floats are written so
that reading back gives bit-identical arrays.  Sub-step data is not stored.
"""

from __future__ import annotations

import csv
import struct

import numpy as np

from .core import Grid, GridRoughPath

MAGIC = b"RGRP"
_HEADER = struct.Struct("<4sIQQddd")
FORMAT_VERSION = 1


def write_binary(rp: GridRoughPath, path):
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, rp.dim, rp.n_steps, rp.grid.horizon, rp.alpha, rp.grid.start))
        fh.write(np.ascontiguousarray(rp.level1, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(rp.level2_cells, dtype="<f8").tobytes())


def read_binary(path) -> GridRoughPath:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError("file too short for a rough-path header")
    magic, ver, d, n, T, alpha, start = _HEADER.unpack_from(raw)
    if magic != MAGIC or ver != FORMAT_VERSION:
        raise ValueError("not a rough-path file (bad magic or version)")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    n1, n2 = (n + 1) * d, n * d * d
    if body.size != n1 + n2:
        raise ValueError(f"payload has {body.size} values, header implies {n1 + n2}")
    level1 = body[:n1].reshape(n + 1, d)
    cells = body[n1:].reshape(n, d, d)
    return GridRoughPath(Grid(T, int(n), start), level1.astype(float), cells.astype(float), alpha)


def write_csv(rp: GridRoughPath, path):
    d = rp.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d", "N", "T", "alpha", "start"])
        w.writerow([d, rp.n_steps, repr(rp.grid.horizon), repr(rp.alpha), repr(rp.grid.start)])
        for row in rp.level1:
            w.writerow([repr(float(v)) for v in row])
        for cell in rp.level2_cells:
            w.writerow([repr(float(v)) for v in cell.ravel()])


def read_csv(path) -> GridRoughPath:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or rows[0] != ["d", "N", "T", "alpha", "start"]:
        raise ValueError("missing rough-path CSV header")
    d, n = int(rows[1][0]), int(rows[1][1])
    T, alpha, start = (float(v) for v in rows[1][2:5])
    body = rows[2:]
    if len(body) != 2 * n + 1:
        raise ValueError(f"expected {2 * n + 1} data rows, found {len(body)}")
    level1 = np.array([[float(v) for v in r] for r in body[: n + 1]]).reshape(n + 1, d)
    cells = np.array([[float(v) for v in r] for r in body[n + 1 :]]).reshape(n, d, d)
    return GridRoughPath(Grid(T, n, start), level1, cells, alpha)


def write_rough_path(rp: GridRoughPath, path, fmt: str = "binary"):
    if fmt == "binary":
        write_binary(rp, path)
    elif fmt == "csv":
        write_csv(rp, path)
    else:
        raise ValueError(f"unknown format {fmt!r}")


def read_rough_path(path) -> GridRoughPath:
    """Read either layout, sniffing the magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    return read_binary(path) if head == MAGIC else read_csv(path)
