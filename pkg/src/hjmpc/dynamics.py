"""Continuous-time control-affine models, RK4 discretization and Hamiltonian maximization.

Every model here has the form ``dx/dt = drift(x) + G(x) u`` with a box of
admissible controls.  That structure gives the inner supremum over controls
in closed form (bang-bang per channel), which the grid solver relies on.

Arrays follow the numpy convention of a trailing state/control axis, so all
functions accept a single vector ``(n,)`` or a batch ``(..., n)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


class ContractError(ValueError):
    """Raised when an input violates an operation's preconditions."""


@dataclass(frozen=True, eq=False)
class ControlAffineModel:
    """Base class; subclasses implement ``drift`` and ``control_matrix``.

    ``state_lo``/``state_hi`` describe the simulation box.  Only the indices
    in ``clamp_dims`` are clamped after a step; periodic indices are wrapped
    into ``[state_lo, state_hi)``.
    """

    n: int
    m: int
    control_lo: np.ndarray
    control_hi: np.ndarray
    state_lo: np.ndarray
    state_hi: np.ndarray
    periodic_dims: tuple[int, ...] = ()
    clamp_dims: tuple[int, ...] = ()
    # True when G(x) does not depend on x; lets grid solvers skip a per-node matrix.
    constant_control_matrix: bool = field(default=False, repr=False)

    def __post_init__(self):
        for name in ("control_lo", "control_hi", "state_lo", "state_hi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.control_lo.shape != (self.m,) or self.control_hi.shape != (self.m,):
            raise ContractError("control bounds must have length m")
        if self.state_lo.shape != (self.n,) or self.state_hi.shape != (self.n,):
            raise ContractError("state box must have length n")
        if not np.all(self.control_lo < self.control_hi):
            raise ContractError("control_lo must be < control_hi elementwise")
        if any(d < 0 or d >= self.n for d in self.periodic_dims + self.clamp_dims):
            raise ContractError("periodic/clamp dims must index the state")

    name = "control-affine"

    def drift(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def control_matrix(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def drift_jacobian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def control_matrix_jacobian(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """d(G(x) u)/dx; zero for constant G."""
        return np.zeros(x.shape + (self.n,))

    def flow(self, x, u):
        return self.drift(x) + np.einsum("...ij,...j->...i", self.control_matrix(x), u)

    def flow_jacobians(self, x, u):
        """Continuous-time Jacobians ``(df/dx, df/du)`` batched over leading axes."""
        A = self.drift_jacobian(x) + self.control_matrix_jacobian(x, u)
        B = np.broadcast_to(self.control_matrix(x), x.shape[:-1] + (self.n, self.m))
        return A, B

    def max_abs_flow(self, states: np.ndarray) -> np.ndarray:
        """Per-component max of |f_i(x, u)| over the given states and the control box."""
        drift = self.drift(states).reshape(-1, self.n)
        G = self.control_matrix(states)
        if G.ndim == 2:
            G = G[None]
        G = G.reshape(-1, self.n, self.m)
        umax = np.maximum(np.abs(self.control_lo), np.abs(self.control_hi))
        return np.max(np.abs(drift) + np.abs(G) @ umax, axis=0)


@dataclass(frozen=True, init=False, eq=False)
class Dubins4D(ControlAffineModel):
    """State (x, y, heading, speed); controls (turn rate, acceleration)."""

    name = "dubins4d"

    def __init__(self, turn_rate=(-2.0, 2.0), accel=(-1.0, 1.0), speed=(0.1, 3.0),
                 box=(-4.0, 4.0, -4.0, 4.0)):
        x_lo, x_hi, y_lo, y_hi = box
        super().__init__(
            n=4, m=2,
            control_lo=np.array([turn_rate[0], accel[0]]),
            control_hi=np.array([turn_rate[1], accel[1]]),
            state_lo=np.array([x_lo, y_lo, -math.pi, speed[0]]),
            state_hi=np.array([x_hi, y_hi, math.pi, speed[1]]),
            periodic_dims=(2,),
            clamp_dims=(3,),
            constant_control_matrix=True,
        )

    def drift(self, x):
        x = np.asarray(x, dtype=float)
        th, v = x[..., 2], x[..., 3]
        zero = np.zeros_like(v)
        return np.stack([v * np.cos(th), v * np.sin(th), zero, zero], axis=-1)

    def control_matrix(self, x):
        return np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

    def drift_jacobian(self, x):
        x = np.asarray(x, dtype=float)
        th, v = x[..., 2], x[..., 3]
        c, s = np.cos(th), np.sin(th)
        J = np.zeros(x.shape + (4,))
        J[..., 0, 2] = -v * s
        J[..., 0, 3] = c
        J[..., 1, 2] = v * c
        J[..., 1, 3] = s
        return J

    def max_abs_flow(self, states):
        # |v cos| and |v sin| peak at the largest speed magnitude in the sampled states.
        vmax = np.max(np.abs(states[..., 3]))
        umax = np.maximum(np.abs(self.control_lo), np.abs(self.control_hi))
        return np.array([vmax, vmax, umax[0], umax[1]])


@dataclass(frozen=True, init=False, eq=False)
class DoubleIntegrator(ControlAffineModel):
    """dx/dt = v, dv/dt = u with |u| <= u_max."""

    name = "double_integrator"

    def __init__(self, u_max=1.0, box=(-2.0, 2.0, -2.0, 2.0)):
        super().__init__(
            n=2, m=1,
            control_lo=np.array([-u_max]), control_hi=np.array([u_max]),
            state_lo=np.array([box[0], box[2]]), state_hi=np.array([box[1], box[3]]),
            constant_control_matrix=True,
        )

    def drift(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([x[..., 1], np.zeros_like(x[..., 1])], axis=-1)

    def control_matrix(self, x):
        return np.array([[0.0], [1.0]])

    def drift_jacobian(self, x):
        J = np.zeros(np.shape(x) + (2,))
        J[..., 0, 1] = 1.0
        return J


@dataclass(frozen=True, init=False, eq=False)
class LinearSystem(ControlAffineModel):
    """dx/dt = A x + B u; unbounded controls unless bounds are given."""

    A: np.ndarray = None
    B: np.ndarray = None
    name = "linear"

    def __init__(self, A, B, control_lo=None, control_hi=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        n, m = B.shape
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        super().__init__(
            n=n, m=m,
            control_lo=np.full(m, -np.inf) if control_lo is None else control_lo,
            control_hi=np.full(m, np.inf) if control_hi is None else control_hi,
            state_lo=np.full(n, -np.inf), state_hi=np.full(n, np.inf),
            constant_control_matrix=True,
        )

    def drift(self, x):
        return np.asarray(x, dtype=float) @ self.A.T

    def control_matrix(self, x):
        return self.B

    def drift_jacobian(self, x):
        return np.broadcast_to(self.A, np.shape(x) + (self.n,)).copy()


@dataclass(frozen=True, init=False, eq=False)
class ZeroDynamics(ControlAffineModel):
    """f(x, u) = 0.  Useful as a fixed-point check for the grid solver."""

    name = "zero"

    def __init__(self, n=2, m=1, box=None):
        lo = np.full(n, -1.0) if box is None else np.asarray(box[0], dtype=float)
        hi = np.full(n, 1.0) if box is None else np.asarray(box[1], dtype=float)
        super().__init__(n=n, m=m, control_lo=-np.ones(m), control_hi=np.ones(m),
                         state_lo=lo, state_hi=hi, constant_control_matrix=True)

    def drift(self, x):
        return np.zeros(np.shape(x))

    def control_matrix(self, x):
        return np.zeros((self.n, self.m))

    def drift_jacobian(self, x):
        return np.zeros(np.shape(x) + (self.n,))


def _check(model: ControlAffineModel, x, u=None):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (model.n,):
        raise ContractError(f"state has trailing dimension {x.shape[-1:]}, expected {model.n}")
    if u is None:
        return x, None
    u = np.asarray(u, dtype=float)
    if u.shape[-1:] != (model.m,):
        raise ContractError(f"control has trailing dimension {u.shape[-1:]}, expected {model.m}")
    return x, u


def flow(model: ControlAffineModel, x, u) -> np.ndarray:
    """Evaluate dx/dt = f(x, u)."""
    x, u = _check(model, x, u)
    return model.flow(x, u)


def wrap_state(model: ControlAffineModel, x: np.ndarray) -> np.ndarray:
    """Wrap periodic components into ``[lo, hi)``."""
    if not model.periodic_dims:
        return x
    x = np.array(x, dtype=float, copy=True)
    for d in model.periodic_dims:
        lo, hi = model.state_lo[d], model.state_hi[d]
        w = np.mod(x[..., d] - lo, hi - lo) + lo
        # mod can round up to exactly hi for tiny negative inputs
        x[..., d] = np.where(w >= hi, lo, w)
    return x


def state_difference(model: ControlAffineModel, a, b) -> np.ndarray:
    """a - b with periodic components mapped to the shortest signed arc."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    for i in model.periodic_dims:
        period = model.state_hi[i] - model.state_lo[i]
        d[..., i] = np.mod(d[..., i] + 0.5 * period, period) - 0.5 * period
    return d


def _rk4(model, x, u, dt):
    k1 = model.flow(x, u)
    k2 = model.flow(x + 0.5 * dt * k1, u)
    k3 = model.flow(x + 0.5 * dt * k2, u)
    k4 = model.flow(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _clamp(model, x):
    if not model.clamp_dims:
        return x
    for d in model.clamp_dims:
        c = np.clip(x[..., d], model.state_lo[d], model.state_hi[d])
        if logger.isEnabledFor(logging.DEBUG) and np.any(c != x[..., d]):
            logger.debug("clamped state component %d to [%g, %g]", d,
                         model.state_lo[d], model.state_hi[d])
        x[..., d] = c
    return x


def step(model: ControlAffineModel, x, u, dt: float) -> np.ndarray:
    """One RK4 step with u held constant, then wrap periodic and clamp bounded dims."""
    if not dt > 0:
        raise ContractError(f"dt must be positive, got {dt}")
    x, u = _check(model, x, u)
    return _clamp(model, wrap_state(model, _rk4(model, x, u, dt)))


def advance(model: ControlAffineModel, x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """``step`` without argument checks, for inner loops."""
    return _clamp(model, wrap_state(model, _rk4(model, x, u, dt)))


def rollout(model: ControlAffineModel, x0, controls, dt: float) -> np.ndarray:
    """States ``(len(controls) + 1, n)`` from applying ``controls`` open loop."""
    x0, U = _check(model, x0, controls)
    X = np.empty((len(U) + 1, model.n))
    X[0] = x0
    for k in range(len(U)):
        X[k + 1] = advance(model, X[k], U[k], dt)
    return X


def step_with_jacobians(model: ControlAffineModel, x, u, dt: float):
    """RK4 step plus its exact Jacobians w.r.t. state and control.

    The Jacobians are those of the unclamped RK4 map; wrapping is a translation
    and leaves them unchanged.
    """
    x, u = _check(model, x, u)
    n = model.n
    eye = np.eye(n)
    h = 0.5 * dt

    def stage(xs, dxs_dx, dxs_du):
        k = model.flow(xs, u)
        A, B = model.flow_jacobians(xs, u)
        return k, A @ dxs_dx, A @ dxs_du + B

    zero_u = np.zeros(x.shape[:-1] + (n, model.m))
    k1, k1x, k1u = stage(x, eye, zero_u)
    k2, k2x, k2u = stage(x + h * k1, eye + h * k1x, h * k1u)
    k3, k3x, k3u = stage(x + h * k2, eye + h * k2x, h * k2u)
    k4, k4x, k4u = stage(x + dt * k3, eye + dt * k3x, dt * k3u)
    c = dt / 6.0
    x_next = x + c * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    Ad = eye + c * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    Bd = c * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
    return _clamp(model, wrap_state(model, x_next)), Ad, Bd


def hamiltonian_max(model: ControlAffineModel, x, p):
    """Return ``(H, u_star)`` with H = max over admissible u of p . f(x, u).

    Ties (zero switching coefficient) resolve to the lower control bound.
    """
    x, _ = _check(model, x)
    p = np.asarray(p, dtype=float)
    if p.shape != x.shape:
        raise ContractError("costate must match the state shape")
    G = model.control_matrix(x)
    coeff = np.einsum("...ij,...i->...j", G, p) if G.ndim > 2 else p @ G
    u_star = np.where(coeff > 0, model.control_hi, model.control_lo)
    H = np.sum(p * model.drift(x), axis=-1) + np.sum(coeff * u_star, axis=-1)
    return H, u_star
