"""Grid solver for the converged safety value function.

The value V(x) = sup_u min_t l(x(t)) is obtained by sweeping the discrete
variational inequality

    V+ = min(l, V + dt * H_LF(x, D V))

backward in time from V = l until the sup-norm change drops below a
tolerance.  H_LF is the first-order global Lax-Friedrichs numerical
Hamiltonian: central average of the one-sided differences plus per-axis
dissipation alpha_i = max |f_i|.  Periodic axes wrap.  Ghost nodes on the
other faces continue V with the end slope of l (V_ghost = V_edge + l_ghost -
l_edge, l linearly extrapolated), which keeps the sweep monotone; plain
linear extrapolation of V does not when the flow leaves the box.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ControlAffineModel
from .geometry import signed_distance
from .grid import Grid, ValueField

logger = logging.getLogger(__name__)

CFL_LIMIT = 1.0


class CFLError(ValueError):
    pass


@dataclass
class SolveReport:
    iterations: int
    final_change: float
    wall_time: float
    dt: list[float] = field(repr=False)
    status: str = "converged"
    # largest elementwise V^{k+1} - V^k seen over all sweeps
    max_increase: float = -np.inf

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "final_change": self.final_change,
            "max_increase": self.max_increase,
            "dt": self.dt[0] if self.dt else None,
            "wall_time": self.wall_time,
        }


def constraint_field(scenario, grid: Grid, position_dims=(0, 1)) -> ValueField:
    """Signed distance to the scenario's obstacles, evaluated at every node."""
    mesh = grid.mesh()
    px, py = mesh[position_dims[0]], mesh[position_dims[1]]
    l = signed_distance(scenario.obstacles, px, py)
    return ValueField(grid, np.broadcast_to(l, grid.shape))


def field_from_function(grid: Grid, fn) -> ValueField:
    """Evaluate ``fn(states)`` on all nodes; ``states`` has a trailing ndims axis."""
    return ValueField(grid, fn(grid.states))


class _LaxFriedrichs:
    """Precomputed per-grid pieces of the numerical Hamiltonian for one model."""

    def __init__(self, model: ControlAffineModel, grid: Grid, l: np.ndarray):
        if model.n != grid.ndims:
            raise ValueError(f"model has {model.n} states, grid has {grid.ndims} axes")
        self.grid = grid
        self.spacing = grid.spacing
        states = grid.states
        drift = model.drift(states)
        self.drift = [drift[..., i] if np.any(drift[..., i]) else None for i in range(model.n)]
        if model.constant_control_matrix:
            self.G = np.asarray(model.control_matrix(np.zeros(model.n)))
        else:
            self.G = model.control_matrix(states)
        self.lo = model.control_lo
        self.hi = model.control_hi
        self.alpha = np.asarray(model.max_abs_flow(states), dtype=float)
        self.m = model.m
        # Ghost offsets for non-periodic faces: the constraint's end slope.
        self.ghost = {}
        for i, ax in enumerate(grid.axes):
            if not ax.periodic:
                first = np.take(l, [0], axis=i) - np.take(l, [1], axis=i)
                last = np.take(l, [-1], axis=i) - np.take(l, [-2], axis=i)
                self.ghost[i] = (first, last)

    def max_stable_dt(self, cfl: float = CFL_LIMIT) -> float:
        rate = float(np.sum(self.alpha / self.spacing))
        return np.inf if rate == 0 else cfl / rate

    def check_dt(self, dt: float):
        rate = float(np.sum(self.alpha / self.spacing))
        if dt * rate > CFL_LIMIT:
            raise CFLError(f"dt={dt!r} violates the CFL bound (dt * sum(alpha/dx) = {dt * rate:.4g} > {CFL_LIMIT})")

    def _differences(self, V, axis):
        if self.grid.axes[axis].periodic:
            P = np.concatenate([np.take(V, [-1], axis=axis), V, np.take(V, [0], axis=axis)], axis=axis)
        else:
            first, last = self.ghost[axis]
            P = np.concatenate([np.take(V, [0], axis=axis) + first, V,
                                np.take(V, [-1], axis=axis) + last], axis=axis)
        n = V.shape[axis]
        dx = self.spacing[axis]
        Pm = _slab(P, axis, 1, n + 1)
        back = (Pm - _slab(P, axis, 0, n)) / dx
        fwd = (_slab(P, axis, 2, n + 2) - Pm) / dx
        return back, fwd

    def hamiltonian(self, V: np.ndarray) -> np.ndarray:
        H = np.zeros(V.shape)
        constant_G = self.G.ndim == 2
        coeff = [np.zeros(V.shape) for _ in range(self.m)]
        for i in range(V.ndim):
            back, fwd = self._differences(V, i)
            if self.alpha[i] != 0.0:
                H += (0.5 * self.alpha[i]) * (fwd - back)
            pbar = 0.5 * (fwd + back)
            if self.drift[i] is not None:
                H += pbar * self.drift[i]
            for j in range(self.m):
                g = self.G[i, j] if constant_G else self.G[..., i, j]
                if constant_G and g == 0.0:
                    continue
                coeff[j] += g * pbar
        for j in range(self.m):
            c = coeff[j]
            H += np.where(c > 0, c * self.hi[j], c * self.lo[j])
        return H

    def update(self, V: np.ndarray, l: np.ndarray, dt: float) -> np.ndarray:
        return np.minimum(l, V + dt * self.hamiltonian(V))


def _slab(a, axis, start, stop):
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    return a[tuple(idx)]


def vi_step(model: ControlAffineModel, V: ValueField, l: ValueField, dt: float) -> ValueField:
    """One backward-time sweep of the discrete variational inequality."""
    if V.grid != l.grid:
        raise ValueError("V and l must share a grid")
    scheme = _LaxFriedrichs(model, V.grid, l.values)
    scheme.check_dt(dt)
    return ValueField(V.grid, scheme.update(V.values, l.values, dt))


def solve_safety_value(model: ControlAffineModel, grid: Grid, scenario, tol: float = 1e-4,
                       max_iters: int = 2000, cfl: float = 0.5, progress=None):
    """Iterate sweeps from V = l until the sup-norm change is below ``tol``.

    ``scenario`` is anything with an ``obstacles`` attribute, or a ready-made
    constraint ``ValueField``.  Returns ``(field, report)``; a non-converged
    solve still returns the last iterate with ``report.status == "max-iterations"``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    l = scenario if isinstance(scenario, ValueField) else constraint_field(scenario, grid)
    if l.grid != grid:
        raise ValueError("constraint field lives on a different grid")
    scheme = _LaxFriedrichs(model, grid, l.values)
    dt = scheme.max_stable_dt(cfl)
    if not np.isfinite(dt):
        # no dynamics: any dt works, and one sweep returns l exactly
        dt = 1.0
    lv = l.values
    V = np.array(lv)
    change = np.inf
    max_increase = -np.inf
    dts = []
    it = 0
    while it < max_iters:
        V_new = scheme.update(V, lv, dt)
        diff = V_new - V
        change = float(np.max(np.abs(diff)))
        max_increase = max(max_increase, float(np.max(diff)))
        V = V_new
        it += 1
        dts.append(dt)
        if progress is not None:
            progress(it, change)
        if change < tol:
            break
    status = "converged" if change < tol else "max-iterations"
    report = SolveReport(iterations=it, final_change=change, wall_time=time.perf_counter() - t0,
                         dt=dts, status=status, max_increase=max_increase)
    logger.info("safety value solve: %s after %d sweeps (change %.3g)", status, it, change)
    return ValueField(grid, V), report
