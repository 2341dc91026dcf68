"""Planar circular obstacles and the signed-distance constraint l(x)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    radius: float


def signed_distance(obstacles: Sequence[Circle], x, y):
    """Distance to the union of circles; positive outside, negative inside.

    With no obstacles the result is +inf.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.full(np.broadcast(x, y).shape, np.inf)
    for ob in obstacles:
        out = np.minimum(out, np.hypot(x - ob.cx, y - ob.cy) - ob.radius)
    return out


def signed_distance_gradient(obstacles: Sequence[Circle], x, y):
    """Gradient of ``signed_distance`` w.r.t. (x, y), taken from the nearest circle.

    At a circle centre the gradient is undefined; zero is returned there.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast(x, y).shape
    best = np.full(shape, np.inf)
    gx = np.zeros(shape)
    gy = np.zeros(shape)
    for ob in obstacles:
        dx, dy = x - ob.cx, y - ob.cy
        r = np.hypot(dx, dy)
        d = r - ob.radius
        closer = d < best
        safe_r = np.where(r > 0, r, 1.0)
        gx = np.where(closer, np.where(r > 0, dx / safe_r, 0.0), gx)
        gy = np.where(closer, np.where(r > 0, dy / safe_r, 0.0), gy)
        best = np.where(closer, d, best)
    return gx, gy
