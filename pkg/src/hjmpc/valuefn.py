"""Continuous queries on gridded value functions, plus the HJVF file format.

HJVF layout (little-endian throughout)::

    b"HJVF"  u32 version(=1)  u32 ndims
    per axis: f64 lo, f64 hi, u32 count, u8 periodic
    f64 values, C order (last axis fastest)
"""

from __future__ import annotations

import functools
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dynamics import ContractError
from .grid import Axis, Grid, ValueField

MAGIC = b"HJVF"
VERSION = 1
_HEADER = struct.Struct("<4sII")
_AXIS = struct.Struct("<ddIB")


class ValueFileError(Exception):
    """Base class for unreadable value files."""


class BadMagicError(ValueFileError):
    pass


class VersionMismatchError(ValueFileError):
    pass


class TruncatedPayloadError(ValueFileError):
    pass


@functools.lru_cache(maxsize=64)
def _shape(grid: Grid) -> np.ndarray:
    return np.array(grid.shape, dtype=np.int64)


def _query(field: ValueField, x, want_grad: bool):
    x = np.asarray(x, dtype=float)
    grid = field.grid
    if x.shape[-1:] != (grid.ndims,):
        raise ContractError(f"query has trailing dimension {x.shape[-1:]}, expected {grid.ndims}")
    if np.any(np.isnan(x)):
        raise ContractError("NaN in query point")
    batch = x.shape[:-1]
    pts = np.ascontiguousarray(x.reshape(-1, grid.ndims))
    vals, grads, outside = _kernels.multilinear(
        field.values.reshape(-1), _shape(grid), grid.lo, grid.spacing, grid.periodic, pts, want_grad)
    return batch, vals, grads, outside


def interpolate(field: ValueField, x, return_flag: bool = False):
    """Multilinear interpolation at ``x`` (shape ``(n,)`` or ``(..., n)``).

    Non-periodic coordinates outside the grid box are clamped onto it; a point
    on a cell face uses the lower-indexed cell.  With ``return_flag`` the clamp
    mask is returned alongside the values.
    """
    batch, vals, _, outside = _query(field, x, False)
    if batch == ():
        out, outside = float(vals[0]), bool(outside[0])
    else:
        out, outside = vals.reshape(batch), outside.reshape(batch)
    return (out, outside) if return_flag else out


def gradient(field: ValueField, x) -> np.ndarray:
    """Gradient of the multilinear interpolant (constant along each axis within a cell)."""
    batch, _, grads, _ = _query(field, x, True)
    return grads.reshape(batch + (field.grid.ndims,))


@dataclass(frozen=True)
class SafetyOracle:
    field: ValueField
    margin: float = 0.0

    def value(self, x):
        return interpolate(self.field, x)

    def gradient(self, x):
        return gradient(self.field, x)

    def is_safe(self, x):
        return is_safe(self, x)


def is_safe(oracle: SafetyOracle, x):
    v = interpolate(oracle.field, x)
    return v >= oracle.margin if np.ndim(v) else bool(v >= oracle.margin)


def save(field: ValueField, path) -> None:
    grid = field.grid
    parts = [_HEADER.pack(MAGIC, VERSION, grid.ndims)]
    parts += [_AXIS.pack(a.lo, a.hi, a.count, int(a.periodic)) for a in grid.axes]
    parts.append(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)


def load(path) -> ValueField:
    with open(path, "rb") as fh:
        data = fh.read()
    return from_bytes(data)


def from_bytes(data: bytes) -> ValueField:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"not an HJVF file (magic {data[:4]!r})")
    if len(data) < _HEADER.size:
        raise TruncatedPayloadError("file ends inside the header")
    _, version, ndims = _HEADER.unpack_from(data)
    if version != VERSION:
        raise VersionMismatchError(f"HJVF version {version}, this reader supports {VERSION}")
    offset = _HEADER.size
    if len(data) < offset + ndims * _AXIS.size:
        raise TruncatedPayloadError("file ends inside the axis table")
    axes = []
    for _ in range(ndims):
        lo, hi, count, periodic = _AXIS.unpack_from(data, offset)
        offset += _AXIS.size
        axes.append(Axis(lo, hi, count, bool(periodic)))
    grid = Grid(tuple(axes))
    payload = len(data) - offset
    if payload != 8 * grid.size:
        raise TruncatedPayloadError(
            f"payload holds {payload} bytes, grid needs {8 * grid.size} ({grid.size} nodes)")
    values = np.frombuffer(data, dtype="<f8", offset=offset).astype(np.float64)
    return ValueField(grid, values)
