"""Rectilinear grids and node-valued fields on them."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    count: int
    periodic: bool = False

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"axis needs lo < hi, got [{self.lo}, {self.hi}]")
        if self.count < 2:
            raise ValueError(f"axis needs at least 2 nodes, got {self.count}")

    @property
    def spacing(self) -> float:
        if self.periodic:
            return (self.hi - self.lo) / self.count
        return (self.hi - self.lo) / (self.count - 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.lo + self.spacing * np.arange(self.count)


def _frozen(items) -> np.ndarray:
    arr = np.array(items)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Grid:
    axes: tuple[Axis, ...]

    @classmethod
    def from_bounds(cls, lo, hi, counts, periodic_dims=()) -> "Grid":
        return cls(tuple(
            Axis(float(a), float(b), int(c), i in periodic_dims)
            for i, (a, b, c) in enumerate(zip(lo, hi, counts))
        ))

    @property
    def ndims(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.count for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def spacing(self) -> np.ndarray:
        return _frozen([a.spacing for a in self.axes])

    @cached_property
    def lo(self) -> np.ndarray:
        return _frozen([a.lo for a in self.axes])

    @cached_property
    def hi(self) -> np.ndarray:
        return _frozen([a.hi for a in self.axes])

    @cached_property
    def periodic(self) -> np.ndarray:
        return _frozen([a.periodic for a in self.axes])

    def mesh(self) -> list[np.ndarray]:
        """Open (broadcastable) coordinate arrays, one per axis."""
        return np.meshgrid(*(a.nodes for a in self.axes), indexing="ij", sparse=True)

    @cached_property
    def states(self) -> np.ndarray:
        """All node coordinates as an array of shape ``shape + (ndims,)``."""
        full = np.meshgrid(*(a.nodes for a in self.axes), indexing="ij")
        return np.stack(full, axis=-1)


class ValueField:
    """Node values on a grid, stored C-ordered (last axis fastest). Read-only."""

    def __init__(self, grid: Grid, values):
        values = np.array(values, dtype=np.float64, copy=True)
        if values.size != grid.size:
            raise ValueError(f"{values.size} values for a grid of {grid.size} nodes")
        values = values.reshape(grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("value field contains non-finite entries")
        values.flags.writeable = False
        self.grid = grid
        self.values = values

    def __eq__(self, other):
        if not isinstance(other, ValueField):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"ValueField(shape={self.grid.shape}, min={self.values.min():.4g}, max={self.values.max():.4g})"
