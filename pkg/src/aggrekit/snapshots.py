"""AGGF snapshot files.

Layout (little-endian): magic b"AGGF", u8 version (=1), u8 dim, u32 N,
f64 L, f64 t, then N**dim f64 values in row-major order.
"""

from __future__ import annotations

import struct

import numpy as np

from .grid import Field, Grid

MAGIC = b"AGGF"
VERSION = 1
_HEADER = struct.Struct("<4sBBIdd")


def encode_snapshot(f: Field) -> bytes:
    g = f.grid
    head = _HEADER.pack(MAGIC, VERSION, g.dim, g.points, g.half_length, float(f.t))
    return head + np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C")


def decode_snapshot(data: bytes) -> Field:
    if len(data) < _HEADER.size:
        raise ValueError("truncated AGGF header")
    magic, version, dim, n, L, t = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported AGGF version {version}")
    grid = Grid(dim, L, n)
    body = data[_HEADER.size:]
    if len(body) != 8 * grid.size:
        raise ValueError(f"expected {8 * grid.size} payload bytes, got {len(body)}")
    vals = np.frombuffer(body, dtype="<f8").reshape(grid.shape).astype(float)
    return Field(grid, vals, t)


def write_snapshot(f: Field, path):
    with open(path, "wb") as fh:
        fh.write(encode_snapshot(f))


def read_snapshot(path) -> Field:
    with open(path, "rb") as fh:
        return decode_snapshot(fh.read())
