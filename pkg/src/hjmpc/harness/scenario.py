"""Scenario documents: YAML (JSON is accepted too) with a versioned schema.

Every default is written into the file so a run is self-describing.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import cached_property
from pathlib import Path

import jsonschema
import yaml

from ..dynamics import Dubins4D
from ..geometry import Circle
from ..grid import Grid

SCHEMA_VERSION = 1
CI_GRID = (41, 41, 41, 21)
PAPER_GRID = (50, 50, 50, 30)

_PAIR = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "model", "box", "obstacles", "goal", "task_horizon", "dt", "grid"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "model": {
            "type": "object",
            "required": ["name", "turn_rate", "accel", "speed"],
            "additionalProperties": False,
            "properties": {
                "name": {"const": "dubins4d"},
                "turn_rate": _PAIR,
                "accel": _PAIR,
                "speed": _PAIR,
            },
        },
        "box": {
            "type": "object", "required": ["x", "y"], "additionalProperties": False,
            "properties": {"x": _PAIR, "y": _PAIR},
        },
        "obstacles": {
            "type": "array",
            "items": {
                "type": "object", "required": ["cx", "cy", "radius"], "additionalProperties": False,
                "properties": {"cx": {"type": "number"}, "cy": {"type": "number"},
                               "radius": {"type": "number", "exclusiveMinimum": 0}},
            },
        },
        "goal": {
            "type": "object", "required": ["gx", "gy"], "additionalProperties": False,
            "properties": {"gx": {"type": "number"}, "gy": {"type": "number"}},
        },
        "goal_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "task_horizon": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "grid": {
            "type": "object", "required": ["counts", "x", "y"], "additionalProperties": False,
            "properties": {
                "counts": {"type": "array", "items": {"type": "integer", "minimum": 3},
                           "minItems": 4, "maxItems": 4},
                "x": _PAIR,
                "y": _PAIR,
            },
        },
        "control_weight": {"type": "number", "minimum": 0},
        "start_margin": {"type": "number"},
        "terminal_margin": {"type": "number", "minimum": 0},
    },
}


class ScenarioError(ValueError):
    """A scenario document is malformed or semantically invalid."""


@dataclass(frozen=True)
class Scenario:
    obstacles: tuple = ()
    goal: tuple = (2.5, 2.5)
    box: tuple = (-4.0, 4.0, -4.0, 4.0)
    turn_rate: tuple = (-2.0, 2.0)
    accel: tuple = (-1.0, 1.0)
    speed: tuple = (0.1, 3.0)
    task_horizon: float = 2.0
    dt: float = 0.01
    grid_counts: tuple = CI_GRID
    grid_box: tuple = (-4.0, 4.0, -4.0, 4.0)
    control_weight: float = 1e-3
    goal_tolerance: float = 0.2
    start_margin: float = 0.05
    # delta in V_s(x_h) >= delta for the safety-value controller
    terminal_margin: float = 0.0
    name: str = "default"

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(
            o if isinstance(o, Circle) else Circle(*o) for o in self.obstacles))
        for attr in ("goal", "box", "turn_rate", "accel", "speed", "grid_box"):
            object.__setattr__(self, attr, tuple(float(v) for v in getattr(self, attr)))
        object.__setattr__(self, "grid_counts", tuple(int(c) for c in self.grid_counts))

    @cached_property
    def model(self) -> Dubins4D:
        return Dubins4D(turn_rate=self.turn_rate, accel=self.accel, speed=self.speed, box=self.box)

    @property
    def steps(self) -> int:
        """Task horizon in steps (K)."""
        return int(round(self.task_horizon / self.dt))

    def grid(self) -> Grid:
        x0, x1, y0, y1 = self.grid_box
        return Grid.from_bounds(
            [x0, y0, -math.pi, self.speed[0]], [x1, y1, math.pi, self.speed[1]],
            self.grid_counts, periodic_dims=(2,))

    def with_grid(self, counts) -> "Scenario":
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields["grid_counts"] = tuple(counts)
        return Scenario(**fields)

    def to_document(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "model": {"name": "dubins4d", "turn_rate": list(self.turn_rate),
                      "accel": list(self.accel), "speed": list(self.speed)},
            "box": {"x": list(self.box[:2]), "y": list(self.box[2:])},
            "obstacles": [asdict(o) for o in self.obstacles],
            "goal": {"gx": self.goal[0], "gy": self.goal[1]},
            "goal_tolerance": self.goal_tolerance,
            "task_horizon": self.task_horizon,
            "dt": self.dt,
            "grid": {"counts": list(self.grid_counts), "x": list(self.grid_box[:2]),
                     "y": list(self.grid_box[2:])},
            "control_weight": self.control_weight,
            "start_margin": self.start_margin,
            "terminal_margin": self.terminal_margin,
        }


def default_scenario(paper_scale: bool = False) -> Scenario:
    """Three r = 0.6 m discs between the start region and the goal at (2.5, 2.5).

    The terminal margin of 0.2 absorbs the optimism of the first-order value
    on these coarse grids: below it, sampled states are often unrecoverable.
    """
    return Scenario(
        obstacles=(Circle(-1.2, 0.8, 0.6), Circle(0.3, -0.5, 0.6), Circle(1.5, 1.2, 0.6)),
        grid_counts=PAPER_GRID if paper_scale else CI_GRID,
        terminal_margin=0.2,
    )


def validate(sc: Scenario) -> list[str]:
    """Semantic problems with a scenario; empty when it is usable."""
    problems = []
    K = sc.task_horizon / sc.dt
    if abs(K - round(K)) > 1e-9 * max(1.0, K):
        problems.append(f"task_horizon / dt = {K!r} is not an integer")
    for i, o in enumerate(sc.obstacles):
        if math.hypot(sc.goal[0] - o.cx, sc.goal[1] - o.cy) <= o.radius:
            problems.append(f"goal lies inside obstacle {i}")
        if not (sc.box[0] <= o.cx <= sc.box[1] and sc.box[2] <= o.cy <= sc.box[3]):
            problems.append(f"obstacle {i} centre lies outside the spatial box")
    gb, b = sc.grid_box, sc.box
    if gb[0] > b[0] or gb[1] < b[1] or gb[2] > b[2] or gb[3] < b[3]:
        problems.append("grid box does not cover the simulation box")
    for name in ("box", "turn_rate", "accel", "speed", "grid_box"):
        v = getattr(sc, name)
        for lo, hi in zip(v[0::2], v[1::2]):
            if not lo < hi:
                problems.append(f"{name} has an empty interval [{lo}, {hi}]")
    if sc.speed[0] < 0:
        problems.append("speed bounds must be non-negative")
    return problems


def from_document(doc) -> Scenario:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"{where}: {exc.message}") from None
    m, g = doc["model"], doc["grid"]
    sc = Scenario(
        name=doc.get("name", "scenario"),
        obstacles=tuple(Circle(o["cx"], o["cy"], o["radius"]) for o in doc["obstacles"]),
        goal=(doc["goal"]["gx"], doc["goal"]["gy"]),
        box=tuple(doc["box"]["x"]) + tuple(doc["box"]["y"]),
        turn_rate=m["turn_rate"], accel=m["accel"], speed=m["speed"],
        task_horizon=doc["task_horizon"], dt=doc["dt"],
        grid_counts=g["counts"], grid_box=tuple(g["x"]) + tuple(g["y"]),
        control_weight=doc.get("control_weight", 1e-3),
        goal_tolerance=doc.get("goal_tolerance", 0.2),
        start_margin=doc.get("start_margin", 0.05),
        terminal_margin=doc.get("terminal_margin", 0.0),
    )
    problems = validate(sc)
    if problems:
        raise ScenarioError("; ".join(problems))
    return sc


def load(path) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: not a readable YAML/JSON document ({exc})") from None
    return from_document(doc)


def dump(sc: Scenario, path) -> None:
    text = yaml.safe_dump(sc.to_document(), sort_keys=False, default_flow_style=None)
    Path(path).write_text(text, encoding="utf-8")
