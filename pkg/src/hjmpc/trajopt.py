"""Augmented-Lagrangian iterative LQR for short-horizon constrained optimal control.

Decision variables are the controls only (single shooting), so every returned
trajectory satisfies the discrete dynamics exactly.  State inequalities
``c(x) >= 0`` enter through a Powell-Hestenes-Rockafellar penalty

    P(c; lam, mu) = (max(0, lam - mu c)^2 - lam^2) / (2 mu)

with multiplier updates ``lam <- max(0, lam - mu c)`` between inner solves.
Control bounds are handled by a box-constrained QP in the backward pass and
by clamping in the forward pass.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from . import _kernels
from . import dynamics as dyn

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
FEASIBLE_SUBOPTIMAL = "feasible-suboptimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration-limit"
NUMERICAL_FAILURE = "numerical-failure"
USABLE = (OPTIMAL, FEASIBLE_SUBOPTIMAL)

_ALPHAS = 0.5 ** np.arange(10)
_REG_MIN = 1e-6
_REG_MAX = 1e10


@dataclass(frozen=True)
class SolverOptions:
    stationarity_tol: float = 1e-6
    feasibility_tol: float = 1e-4
    # the outer loop keeps tightening multipliers until violation drops below this
    # (or the penalty is capped); status is still judged against feasibility_tol
    constraint_tol: float = 1e-8
    max_outer: int = 10
    max_inner: int = 100
    penalty_init: float = 10.0
    penalty_factor: float = 10.0
    penalty_max: float = 1e7
    # relative merit change below which the inner loop counts as stalled
    stall_tol: float = 1e-13
    # promised relative gain under which a failed line search ends the inner loop
    kink_tol: float = 1e-6


@dataclass
class OcpSpec:
    """min sum_k r(x_k, u_k) + phi(x_h)  s.t. dynamics, path c(x_k) >= 0 (k = 1..h), terminal c_T(x_h) >= 0."""

    model: dyn.ControlAffineModel
    dt: float
    horizon: int
    x0: np.ndarray
    running_cost: object
    terminal_cost: object
    path_constraints: Sequence = ()
    terminal_constraints: Sequence = ()
    control_lo: Optional[np.ndarray] = None
    control_hi: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.horizon < 1:
            raise dyn.ContractError("horizon must be at least 1")
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (self.model.n,):
            raise dyn.ContractError(f"x0 must have shape ({self.model.n},)")
        self.control_lo = np.asarray(self.model.control_lo if self.control_lo is None else self.control_lo, dtype=float)
        self.control_hi = np.asarray(self.model.control_hi if self.control_hi is None else self.control_hi, dtype=float)
        self.path_constraints = tuple(self.path_constraints)
        self.terminal_constraints = tuple(self.terminal_constraints)

    @property
    def n_path(self) -> int:
        return sum(c.size for c in self.path_constraints)

    @property
    def n_terminal(self) -> int:
        return sum(c.size for c in self.terminal_constraints)


@dataclass
class SolveResult:
    states: np.ndarray
    controls: np.ndarray
    cost: float
    task_cost: float
    status: str
    stationarity: float
    max_violation: float
    path_multipliers: np.ndarray = field(repr=False)
    terminal_multipliers: np.ndarray = field(repr=False)
    penalty: float = 0.0
    inner_iterations: int = 0
    outer_iterations: int = 0

    @property
    def usable(self) -> bool:
        return self.status in USABLE


def _stack(constraints, X, n_rows):
    if not constraints:
        return np.zeros((n_rows, 0))
    return np.concatenate([c.value(X) for c in constraints], axis=1)


def _stack_jac(constraints, X, n):
    if not constraints:
        return np.zeros((X.shape[0], 0, n))
    return np.concatenate([c.jacobian(X) for c in constraints], axis=1)


def constraint_values(spec: OcpSpec, X):
    """Path constraint values on x_1..x_h ``(h, p)`` and terminal values on x_h ``(p_T,)``."""
    cp = _stack(spec.path_constraints, X[1:], spec.horizon)
    ct = _stack(spec.terminal_constraints, X[-1:], 1)[0]
    return cp, ct


def max_violation(spec: OcpSpec, X) -> float:
    cp, ct = constraint_values(spec, X)
    worst = 0.0
    if cp.size:
        worst = max(worst, float(np.max(-cp)))
    if ct.size:
        worst = max(worst, float(np.max(-ct)))
    return worst


def _penalty(c, lam, mu):
    if c.size == 0:
        return 0.0
    return float(np.sum((np.maximum(0.0, lam - mu * c) ** 2 - lam ** 2) / (2.0 * mu)))


def evaluate_cost(spec: OcpSpec, controls):
    """Roll out ``controls`` from x0; return ``(J, states)`` with J = sum r + phi."""
    U = np.asarray(controls, dtype=float).reshape(-1, spec.model.m)
    if len(U) != spec.horizon:
        raise dyn.ContractError(f"expected {spec.horizon} controls, got {len(U)}")
    X = _rollout(spec, U)
    return _cost(spec, X, U), X


def task_cost(spec: OcpSpec, X, U) -> float:
    r = getattr(spec.running_cost, "task_value", spec.running_cost.value)
    phi = getattr(spec.terminal_cost, "task_value", spec.terminal_cost.value)
    return float(np.sum(r(X[:-1], U)) + phi(X[-1:])[0])


def _cost(spec, X, U) -> float:
    return float(np.sum(spec.running_cost.value(X[:-1], U)) + spec.terminal_cost.value(X[-1:])[0])


def _merit(spec, X, U, lam_p, lam_t, mu) -> float:
    cp, ct = constraint_values(spec, X)
    return _cost(spec, X, U) + _penalty(cp, lam_p, mu) + _penalty(ct, lam_t, mu)


def _expansion(spec, X, U, lam_p, lam_t, mu):
    """Dynamics Jacobians and the quadratic model of the merit along (X, U).

    State derivative arrays have h + 1 rows; row h is the terminal term.
    """
    h, n = spec.horizon, spec.model.n
    A, B = _jacobians(spec, X, U)
    lx, lu, lxx, luu, lux = spec.running_cost.derivatives(X[:-1], U)
    tx, _, txx, _, _ = spec.terminal_cost.derivatives(X[-1:])
    Lx = np.concatenate([lx, tx], axis=0)
    Lxx = np.concatenate([lxx, txx], axis=0)

    def add_penalty(rows, c, J, lam):
        # d/dx P = -max(0, lam - mu c) dc/dx ; Gauss-Newton curvature mu J'J where active
        active_mult = np.maximum(0.0, lam - mu * c)
        Lx[rows] -= np.einsum("kp,kpn->kn", active_mult, J)
        Ja = J * (active_mult > 0)[..., None]
        Lxx[rows] += mu * np.einsum("kpi,kpj->kij", Ja, Ja)

    if spec.path_constraints:
        cp = _stack(spec.path_constraints, X[1:], h)
        add_penalty(slice(1, h + 1), cp, _stack_jac(spec.path_constraints, X[1:], n), lam_p)
    if spec.terminal_constraints:
        ct = _stack(spec.terminal_constraints, X[-1:], 1)
        add_penalty(slice(h, h + 1), ct, _stack_jac(spec.terminal_constraints, X[-1:], n), lam_t[None])
    return A, B, Lx, np.asarray(lu), Lxx, np.asarray(luu), np.asarray(lux)


def _adjoint_gradient(A, B, Lx, Lu):
    return _kernels.adjoint_gradient(A, B, Lx, np.ascontiguousarray(Lu))


def _projected_norm(g, U, lo, hi):
    at_lo = (U <= lo) & (g > 0)
    at_hi = (U >= hi) & (g < 0)
    return float(np.linalg.norm(np.where(at_lo | at_hi, 0.0, g)))


def _backward(A, B, Lx, Lu, Lxx, Luu, Lux, U, lo, hi, reg):
    """Riccati sweep with a box-constrained QP per stage; None if a stage Hessian is not PD."""
    h, m = U.shape
    kff = np.zeros((h, m))
    K = np.zeros((h, m, A.shape[1]))
    arrs = [np.ascontiguousarray(a, dtype=float) for a in (A, B, Lx, Lu, Lxx, Luu, Lux, U)]
    ok, d1, d2 = _kernels.backward_pass(*arrs, lo, hi, float(reg), kff, K)
    return (kff, K, d1, d2) if ok else None


def _is_dubins(model):
    return isinstance(model, dyn.Dubins4D)


def _rollout(spec, U):
    if _is_dubins(spec.model):
        m = spec.model
        return _kernels.dubins_rollout(spec.x0, U, spec.dt, m.state_lo, m.state_hi)
    return dyn.rollout(spec.model, spec.x0, U, spec.dt)


def _jacobians(spec, X, U):
    if _is_dubins(spec.model):
        return _kernels.dubins_jacobians(X[:-1], U, spec.dt)
    _, A, B = dyn.step_with_jacobians(spec.model, X[:-1], U, spec.dt)
    return A, B


def _forward(spec, X, U, kff, K, alpha):
    model, dt = spec.model, spec.dt
    lo, hi = spec.control_lo, spec.control_hi
    if _is_dubins(model):
        return _kernels.dubins_forward(X, U, kff, K, alpha, lo, hi, dt, model.state_lo, model.state_hi)
    Xn = np.empty_like(X)
    Un = np.empty_like(U)
    Xn[0] = X[0]
    for k in range(len(U)):
        dx = dyn.state_difference(model, Xn[k], X[k])
        Un[k] = np.clip(U[k] + alpha * kff[k] + K[k] @ dx, lo, hi)
        Xn[k + 1] = dyn.advance(model, Xn[k], Un[k], dt)
    return Xn, Un


@dataclass
class _Inner:
    X: np.ndarray
    U: np.ndarray
    merit: float
    stationarity: float
    converged: bool
    iterations: int
    hit_cap: bool
    failed: bool = False


def _inner_solve(spec, X, U, lam_p, lam_t, mu, opts: SolverOptions) -> _Inner:
    lo, hi = spec.control_lo, spec.control_hi
    merit = _merit(spec, X, U, lam_p, lam_t, mu)
    reg = 0.0
    stat = np.inf
    for it in range(opts.max_inner):
        exp = _expansion(spec, X, U, lam_p, lam_t, mu)
        A, B, Lx, Lu, Lxx, Luu, Lux = exp
        if not all(np.all(np.isfinite(a)) for a in exp):
            return _Inner(X, U, merit, np.inf, False, it, False, failed=True)
        stat = _projected_norm(_adjoint_gradient(A, B, Lx, Lu), U, lo, hi)
        if stat <= opts.stationarity_tol:
            return _Inner(X, U, merit, stat, True, it, False)
        accepted = False
        while not accepted:
            bp = _backward(A, B, Lx, Lu, Lxx, Luu, Lux, U, lo, hi, reg)
            if bp is not None:
                kff, K, d1, d2 = bp
                if -(d1 + d2) <= opts.stall_tol * max(1.0, abs(merit)):
                    # the local model promises less than rounding-level progress
                    return _Inner(X, U, merit, stat, False, it + 1, False)
                for alpha in _ALPHAS:
                    Xn, Un = _forward(spec, X, U, kff, K, alpha)
                    m_new = _merit(spec, Xn, Un, lam_p, lam_t, mu)
                    expected = -(alpha * d1 + alpha * alpha * d2)
                    if np.isfinite(m_new) and m_new <= merit and merit - m_new >= 1e-4 * expected:
                        accepted = True
                        break
            if accepted:
                break
            if bp is not None:
                logger.debug("line search failed: reg=%.1e d1=%.3e d2=%.3e last change=%.3e",
                             reg, d1, d2, m_new - merit)
                if -(d1 + d2) <= opts.kink_tol * max(1.0, abs(merit)):
                    # small promised gain that no step realizes: a kink of a piecewise-linear
                    # term (interpolated value, clamp) where regularizing cannot help
                    return _Inner(X, U, merit, stat, False, it + 1, False)
            reg = max(10.0 * reg, _REG_MIN)
            if reg > _REG_MAX:
                # no descent step exists at machine precision: we are as stationary as we get
                return _Inner(X, U, merit, stat, stat <= opts.stationarity_tol, it + 1, False)
        improvement = merit - m_new
        X, U, merit = Xn, Un, m_new
        reg = reg / 10.0 if reg > _REG_MIN else 0.0
        if improvement <= opts.stall_tol * max(1.0, abs(merit)):
            hit_cap = False
            break
    else:
        hit_cap = True
    exp = _expansion(spec, X, U, lam_p, lam_t, mu)
    stat = _projected_norm(_adjoint_gradient(exp[0], exp[1], exp[2], exp[3]), U, lo, hi)
    converged = stat <= opts.stationarity_tol
    return _Inner(X, U, merit, stat, converged, it + 1, hit_cap and not converged)


def solve(spec: OcpSpec, warm_start=None, options: Optional[SolverOptions] = None) -> SolveResult:
    """Minimize the OCP; never raises on numerical trouble (status says what happened)."""
    opts = options or SolverOptions()
    h, m = spec.horizon, spec.model.m
    lo, hi = spec.control_lo, spec.control_hi
    if warm_start is None:
        U = np.clip(np.zeros((h, m)), lo, hi)
    else:
        U = np.clip(np.asarray(warm_start, dtype=float).reshape(h, m), lo, hi)
    X = _rollout(spec, U)
    lam_p = np.zeros((h, spec.n_path))
    lam_t = np.zeros(spec.n_terminal)
    mu = opts.penalty_init
    has_constraints = spec.n_path + spec.n_terminal > 0
    inner_total = 0
    outer = 0
    inner = None
    for outer in range(1, opts.max_outer + 1):
        inner = _inner_solve(spec, X, U, lam_p, lam_t, mu, opts)
        inner_total += inner.iterations
        X, U = inner.X, inner.U
        if inner.failed or not has_constraints:
            break
        viol = max_violation(spec, X)
        if viol <= opts.constraint_tol or (viol <= opts.feasibility_tol and mu >= opts.penalty_max):
            break
        if outer == opts.max_outer:
            break
        cp, ct = constraint_values(spec, X)
        lam_p = np.maximum(0.0, lam_p - mu * cp)
        lam_t = np.maximum(0.0, lam_t - mu * ct)
        mu = min(mu * opts.penalty_factor, opts.penalty_max)

    finite = np.all(np.isfinite(X)) and np.all(np.isfinite(U))
    viol = max_violation(spec, X) if finite else np.inf
    cost = _cost(spec, X, U) if finite else np.nan
    if inner.failed or not finite or not np.isfinite(cost):
        status = NUMERICAL_FAILURE
    elif viol <= opts.feasibility_tol:
        status = OPTIMAL if inner.converged else FEASIBLE_SUBOPTIMAL
    elif inner.hit_cap:
        status = ITERATION_LIMIT
    else:
        status = INFEASIBLE
    return SolveResult(
        states=X, controls=U, cost=cost,
        task_cost=task_cost(spec, X, U) if finite else np.nan,
        status=status, stationarity=inner.stationarity, max_violation=viol,
        path_multipliers=lam_p, terminal_multipliers=lam_t, penalty=mu,
        inner_iterations=inner_total, outer_iterations=outer,
    )


def merit_gradient(spec: OcpSpec, controls, path_multipliers=None, terminal_multipliers=None,
                   penalty: float = 1.0) -> np.ndarray:
    """Gradient of the augmented-Lagrangian merit w.r.t. the controls, by one adjoint sweep."""
    U = np.asarray(controls, dtype=float).reshape(spec.horizon, spec.model.m)
    X = _rollout(spec, U)
    lam_p = np.zeros((spec.horizon, spec.n_path)) if path_multipliers is None else path_multipliers
    lam_t = np.zeros(spec.n_terminal) if terminal_multipliers is None else terminal_multipliers
    A, B, Lx, Lu, *_ = _expansion(spec, X, U, lam_p, lam_t, penalty)
    return _adjoint_gradient(A, B, Lx, Lu)


def stationarity_residual(spec: OcpSpec, result: SolveResult) -> float:
    """Norm of the bound-projected merit gradient at ``result`` (its multipliers and penalty)."""
    g = merit_gradient(spec, result.controls, result.path_multipliers,
                       result.terminal_multipliers, result.penalty or 1.0)
    return _projected_norm(g, result.controls, spec.control_lo, spec.control_hi)
