"""Receding-horizon controllers and the closed-loop rollout engine.

Two variants share everything except the terminal condition: ``baseline``
plans with obstacle constraints only, ``safety-value`` additionally requires
the plan to end where the safety value is at least ``margin``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import dynamics as dyn
from .costs import GoalDistanceCost, ObstacleConstraint, StateBoundConstraint, ValueConstraint
from .geometry import signed_distance
from .trajopt import OcpSpec, SolveResult, SolverOptions, solve
from .valuefn import SafetyOracle, gradient, interpolate

logger = logging.getLogger(__name__)

BASELINE = "baseline"
SAFETY_VALUE = "safety-value"
VARIANTS = (BASELINE, SAFETY_VALUE)


@dataclass(frozen=True)
class ControllerConfig:
    variant: str
    horizon: int
    controls_per_plan: int = 1
    margin: float = 0.0
    warm_start: str = "shift"
    # None -> on for safety-value, off for baseline
    fallback: Optional[bool] = None
    # planner-side back-off on l(x) >= 0, absorbs the solver's feasibility tolerance
    path_margin: float = 1e-3
    # closed loop stops tightening once plans meet the feasibility tolerance, and stops
    # polishing earlier: the applied controls agree to plotting precision but plans
    # more often report feasible-suboptimal than optimal
    solver: SolverOptions = field(
        default_factory=lambda: SolverOptions(constraint_tol=1e-4, stall_tol=1e-9))

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not 1 <= self.controls_per_plan < self.horizon:
            raise ValueError("need 1 <= controls_per_plan < horizon")
        if self.warm_start not in ("shift", "cold"):
            raise ValueError("warm_start must be 'shift' or 'cold'")

    @property
    def use_fallback(self) -> bool:
        return self.variant == SAFETY_VALUE if self.fallback is None else self.fallback

    @property
    def label(self) -> str:
        return f"{self.variant}({self.horizon})"


@dataclass
class RolloutRecord:
    config: ControllerConfig
    seed: int
    states: np.ndarray
    controls: np.ndarray
    l_values: np.ndarray
    v_values: np.ndarray
    plan_status: list
    cost: float
    goal_reached: bool
    fallback_count: int
    dt: float

    @property
    def safe(self) -> bool:
        return bool(np.min(self.l_values) >= 0.0)

    @property
    def min_l(self) -> float:
        return float(np.min(self.l_values))


class _Backoff:
    """Wraps a constraint as c(x) - margin >= 0."""

    def __init__(self, inner, margin):
        self.inner, self.margin, self.size = inner, margin, inner.size

    def value(self, X):
        return self.inner.value(X) - self.margin

    def jacobian(self, X):
        return self.inner.jacobian(X)


def build_ocp(config: ControllerConfig, scenario, oracle: SafetyOracle, x) -> OcpSpec:
    model = scenario.model
    path = []
    if scenario.obstacles:
        obs = ObstacleConstraint(scenario.obstacles)
        path.append(_Backoff(obs, config.path_margin) if config.path_margin else obs)
    if model.clamp_dims:
        # plans that lean on the clamp see a flat, misleading gradient; keep them inside
        d = list(model.clamp_dims)
        path.append(StateBoundConstraint(d, model.state_lo[d], model.state_hi[d]))
    terminal = []
    if config.variant == SAFETY_VALUE:
        terminal.append(ValueConstraint(oracle, config.margin))
    return OcpSpec(
        model=model, dt=scenario.dt, horizon=config.horizon, x0=np.asarray(x, dtype=float),
        running_cost=GoalDistanceCost(scenario.goal, control_weight=scenario.control_weight),
        terminal_cost=GoalDistanceCost(scenario.goal, control_weight=0.0),
        path_constraints=path, terminal_constraints=terminal,
    )


def _shifted(previous: SolveResult, shift: int, horizon: int) -> np.ndarray:
    U = previous.controls[shift:]
    if len(U) == 0:
        U = previous.controls[-1:]
    pad = np.repeat(U[-1:], horizon - len(U), axis=0)
    return np.concatenate([U, pad], axis=0)[:horizon]


def plan(config: ControllerConfig, scenario, oracle: SafetyOracle, x,
         previous: Optional[SolveResult] = None) -> SolveResult:
    """Solve the h-step problem from ``x``; warm-start from ``previous`` when the policy is shift.

    Only controls are carried over.  Multipliers restart at zero: stale ones
    paired with the reset penalty drag plans across kinks of the interpolated
    safety value and stall the inner solve.
    """
    spec = build_ocp(config, scenario, oracle, x)
    warm = None
    if previous is not None and config.warm_start == "shift":
        warm = _shifted(previous, config.controls_per_plan, config.horizon)
    return solve(spec, warm_start=warm, options=config.solver)


def fallback_control(oracle: SafetyOracle, model: dyn.ControlAffineModel, x) -> np.ndarray:
    """Control that maximally increases the safety value along the flow."""
    x = np.asarray(x, dtype=float)
    _, u = dyn.hamiltonian_max(model, x, gradient(oracle.field, x))
    return u


def run_rollout(config: ControllerConfig, scenario, oracle: SafetyOracle, x0, K: int,
                seed: int = 0) -> RolloutRecord:
    """Closed loop for K steps: plan, apply the first h_c controls, repeat.

    Unusable plans fall back to the value-gradient control when enabled;
    otherwise the solver's controls are applied as returned.
    """
    model, dt = scenario.model, scenario.dt
    hc = config.controls_per_plan
    X = np.empty((K + 1, model.n))
    U = np.empty((K, model.m))
    X[0] = np.asarray(x0, dtype=float)
    statuses = []
    fallbacks = 0
    previous = None
    k = 0
    while k < K:
        res = plan(config, scenario, oracle, X[k], previous)
        statuses.append(res.status)
        n_apply = min(hc, K - k)
        use_fallback = not res.usable and config.use_fallback
        if use_fallback:
            fallbacks += 1
            logger.debug("fallback at step %d (status %s)", k, res.status)
        for i in range(n_apply):
            u = fallback_control(oracle, model, X[k]) if use_fallback else res.controls[i]
            U[k] = u
            X[k + 1] = dyn.advance(model, X[k], u, dt)
            k += 1
        previous = res
    l_values = signed_distance(scenario.obstacles, X[:, 0], X[:, 1])
    v_values = np.asarray(interpolate(oracle.field, X))
    goal = np.asarray(scenario.goal)
    dist = np.hypot(X[:, 0] - goal[0], X[:, 1] - goal[1])
    # task cost: running term on x_0..x_{K-1} plus terminal term on x_K
    cost = float(np.sum(dist))
    return RolloutRecord(
        config=config, seed=seed, states=X, controls=U, l_values=l_values, v_values=v_values,
        plan_status=statuses, cost=cost, goal_reached=bool(np.any(dist <= scenario.goal_tolerance)),
        fallback_count=fallbacks, dt=dt,
    )


def plans_per_rollout(K: int, controls_per_plan: int) -> int:
    return math.ceil(K / controls_per_plan)
