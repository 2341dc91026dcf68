"""Stage/terminal costs and state inequality constraints for the trajectory optimizer.

Costs expose ``value(X, U)`` and ``derivatives(X, U)`` batched over a leading
time axis; terminal costs are called with ``U=None``.  Constraints are
``c(x) >= 0`` with ``value(X) -> (N, p)`` and ``jacobian(X) -> (N, p, n)``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .geometry import Circle


class QuadraticCost:
    """(x - target)' Q (x - target) + u' R u."""

    def __init__(self, Q, R=None, target=None):
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.R = None if R is None else np.atleast_2d(np.asarray(R, dtype=float))
        n = self.Q.shape[0]
        self.target = np.zeros(n) if target is None else np.asarray(target, dtype=float)

    def value(self, X, U=None):
        dx = np.atleast_2d(X) - self.target
        v = np.einsum("ki,ij,kj->k", dx, self.Q, dx)
        if U is not None and self.R is not None:
            U = np.atleast_2d(U)
            v = v + np.einsum("ki,ij,kj->k", U, self.R, U)
        return v

    task_value = value

    def derivatives(self, X, U=None):
        X = np.atleast_2d(X)
        N, n = X.shape
        Qs = self.Q + self.Q.T
        lx = (X - self.target) @ Qs.T
        lxx = np.broadcast_to(Qs, (N, n, n))
        if U is None:
            return lx, None, lxx, None, None
        U = np.atleast_2d(U)
        m = U.shape[1]
        if self.R is None:
            lu = np.zeros((N, m))
            luu = np.zeros((N, m, m))
        else:
            Rs = self.R + self.R.T
            lu = U @ Rs.T
            luu = np.broadcast_to(Rs, (N, m, m))
        return lx, lu, lxx, luu, np.zeros((N, m, n))


class ZeroCost(QuadraticCost):
    def __init__(self, n, m=None):
        super().__init__(np.zeros((n, n)), None if m is None else np.zeros((m, m)))


class GoalDistanceCost:
    """Euclidean distance from selected position components to a goal, plus eps_u |u|^2.

    ``task_value`` drops the control term; that is the cost reported for
    comparisons between controllers.
    """

    def __init__(self, goal, dims=(0, 1), control_weight=1e-3, min_distance=1e-6):
        self.goal = np.asarray(goal, dtype=float)
        self.dims = list(dims)
        self.control_weight = float(control_weight)
        self.min_distance = min_distance

    def task_value(self, X, U=None):
        d = np.atleast_2d(X)[:, self.dims] - self.goal
        return np.sqrt(np.einsum("ki,ki->k", d, d))

    def value(self, X, U=None):
        v = self.task_value(X)
        if U is not None and self.control_weight:
            U = np.atleast_2d(U)
            v = v + self.control_weight * np.einsum("ki,ki->k", U, U)
        return v

    def derivatives(self, X, U=None):
        X = np.atleast_2d(X)
        N, n = X.shape
        d = X[:, self.dims] - self.goal
        r = np.sqrt(np.einsum("ki,ki->k", d, d))
        safe = np.maximum(r, self.min_distance)
        unit = np.where(r[:, None] > 0, d / safe[:, None], 0.0)
        lx = np.zeros((N, n))
        lx[:, self.dims] = unit
        hess = (np.eye(len(self.dims)) - unit[:, :, None] * unit[:, None, :]) / safe[:, None, None]
        lxx = np.zeros((N, n, n))
        idx = np.array(self.dims)
        lxx[:, idx[:, None], idx[None, :]] = hess
        if U is None:
            return lx, None, lxx, None, None
        U = np.atleast_2d(U)
        m = U.shape[1]
        lu = 2.0 * self.control_weight * U
        luu = np.broadcast_to(2.0 * self.control_weight * np.eye(m), (N, m, m))
        return lx, lu, lxx, luu, np.zeros((N, m, n))


class ObstacleConstraint:
    """One constraint per circle: distance(position, centre) - radius >= 0."""

    def __init__(self, obstacles: Sequence[Circle], dims=(0, 1)):
        self.centres = np.array([[o.cx, o.cy] for o in obstacles], dtype=float).reshape(-1, 2)
        self.radii = np.array([o.radius for o in obstacles], dtype=float)
        self.dims = list(dims)

    @property
    def size(self):
        return len(self.radii)

    def value(self, X):
        P = np.atleast_2d(X)[:, self.dims]
        diff = P[:, None, :] - self.centres[None]
        return np.sqrt(np.einsum("kpi,kpi->kp", diff, diff)) - self.radii

    def jacobian(self, X):
        X = np.atleast_2d(X)
        diff = X[:, None, self.dims] - self.centres[None]
        r = np.sqrt(np.einsum("kpi,kpi->kp", diff, diff))[..., None]
        unit = np.where(r > 0, diff / np.where(r > 0, r, 1.0), 0.0)
        J = np.zeros((X.shape[0], self.size, X.shape[1]))
        J[:, :, self.dims] = unit
        return J


class LinearConstraint:
    """G x - h >= 0."""

    def __init__(self, G, h):
        self.G = np.atleast_2d(np.asarray(G, dtype=float))
        self.h = np.atleast_1d(np.asarray(h, dtype=float))

    @property
    def size(self):
        return len(self.h)

    def value(self, X):
        return np.atleast_2d(X) @ self.G.T - self.h

    def jacobian(self, X):
        return np.broadcast_to(self.G, (np.atleast_2d(X).shape[0],) + self.G.shape)


class ValueConstraint:
    """Safety value at the state, minus a margin: V_s(x) - delta >= 0."""

    size = 1

    def __init__(self, oracle, margin=None):
        self.oracle = oracle
        self.margin = oracle.margin if margin is None else float(margin)

    def value(self, X):
        return (np.atleast_1d(self.oracle.value(np.atleast_2d(X))) - self.margin)[:, None]

    def jacobian(self, X):
        return self.oracle.gradient(np.atleast_2d(X))[:, None, :]


class StateBoundConstraint:
    """lo <= x[d] <= hi for each selected component d, as two rows per component."""

    def __init__(self, dims, lo, hi):
        self.dims = list(dims)
        self.lo = np.asarray(lo, dtype=float).reshape(-1)
        self.hi = np.asarray(hi, dtype=float).reshape(-1)

    @property
    def size(self):
        return 2 * len(self.dims)

    def value(self, X):
        Z = np.atleast_2d(X)[:, self.dims]
        return np.concatenate([Z - self.lo, self.hi - Z], axis=1)

    def jacobian(self, X):
        X = np.atleast_2d(X)
        q = len(self.dims)
        J = np.zeros((X.shape[0], 2 * q, X.shape[1]))
        for i, d in enumerate(self.dims):
            J[:, i, d] = 1.0
            J[:, q + i, d] = -1.0
        return J
