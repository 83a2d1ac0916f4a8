"""Flat binary field snapshots.

Layout (little-endian): ``int64 d, int64 N, float64 length, float64 t``,
optionally followed by a ``d x d`` float64 tensor (homogenized runs), then
the ``N^d`` node triples in row-major order as float64.
The tensor extension is detected from the file size.
"""

from __future__ import annotations

import struct
from typing import NamedTuple

import numpy as np

from .grid import PeriodicGrid

_HEADER = struct.Struct("<qqdd")


class Snapshot(NamedTuple):
    dim: int
    n: int
    length: float
    t: float
    m: np.ndarray
    tensor: np.ndarray | None = None


def write_snapshot(fh, grid: PeriodicGrid, t: float, m: np.ndarray, tensor=None) -> None:
    if m.shape != grid.shape + (3,):
        raise ValueError(f"field shape {m.shape} does not match grid {grid.shape}")
    fh.write(_HEADER.pack(grid.dim, grid.n, grid.length, float(t)))
    if tensor is not None:
        A = np.asarray(tensor, dtype="<f8").reshape(grid.dim, grid.dim)
        fh.write(A.tobytes(order="C"))
    fh.write(np.ascontiguousarray(m, dtype="<f8").tobytes(order="C"))


def read_snapshots(fh) -> list[Snapshot]:
    """Read every snapshot from a stream written by :func:`write_snapshot`."""
    data = fh.read()
    out, pos = [], 0
    while pos < len(data):
        d, n, length, t = _HEADER.unpack_from(data, pos)
        pos += _HEADER.size
        body = 3 * n**d * 8
        tensor = None
        rest = len(data) - pos
        # a tensor is present if skipping it lands exactly on a record boundary
        if rest != body and not _starts_record(data, pos + body, d, n):
            tensor = np.frombuffer(data, "<f8", d * d, pos).reshape(d, d).copy()
            pos += d * d * 8
        m = np.frombuffer(data, "<f8", 3 * n**d, pos).reshape((n,) * d + (3,)).copy()
        pos += body
        out.append(Snapshot(d, n, length, t, m, tensor))
    return out


def _starts_record(data, pos, d, n) -> bool:
    if pos == len(data):
        return True
    if pos + _HEADER.size > len(data):
        return False
    d2, n2, *_ = _HEADER.unpack_from(data, pos)
    return (d2, n2) == (d, n)
