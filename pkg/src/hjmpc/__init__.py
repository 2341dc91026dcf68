"""Safety-value reachability, constrained trajectory optimization and receding-horizon control."""

from .dynamics import ContractError, Dubins4D, DoubleIntegrator, LinearSystem, ZeroDynamics
from .grid import Axis, Grid, ValueField
from .mpc import ControllerConfig, run_rollout
from .reachability import CFLError, solve_safety_value
from .valuefn import SafetyOracle

__all__ = [
    "Axis", "CFLError", "ContractError", "ControllerConfig", "DoubleIntegrator", "Dubins4D",
    "Grid", "LinearSystem", "SafetyOracle", "ValueField", "ZeroDynamics", "run_rollout",
    "solve_safety_value",
]
