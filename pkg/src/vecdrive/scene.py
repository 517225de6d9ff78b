"""Vectorized driving-scene types and their deterministic JSONL serialization.

A scenario is a ground-truth snapshot in an ego-centric frame (ego at the
origin at t=0, +x forward by convention): the ego state, up to A_MAX agent
tracks with 3 s futures, up to M_MAX fixed-size map polylines, the
navigation-level intended maneuver, and the ground-truth ego future.

All types are immutable after construction and safe to share across
threads. ``Scenario.validate()`` checks every structural invariant;
loaders and generators call it so that any scenario in circulation is
known-good.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from . import jsonio

# Fixed shape budget: the planner is a fixed-size compute graph and pads
# absent slots behind a validity mask.
T_F = 6                 # future waypoints, 0.5 s apart (3 s at 2 Hz)
STEP_SECONDS = 0.5
A_MAX = 8               # agent slots
M_MAX = 8               # map polyline slots
POLYLINE_POINTS = 4     # points per map polyline

TWO_PI = 2.0 * math.pi

Point = tuple[float, float]


class SceneError(Exception):
    """Base class for scene-level failures."""


class ValidationError(SceneError):
    """A value violates a structural invariant.

    ``field`` is a dotted/indexed path such as ``agents[2].future``.
    """

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path
        self.message = message


class ScenarioLoadError(SceneError):
    """A JSONL scenario file failed to parse or validate.

    Carries the 1-based ``line`` and the offending ``field`` path when known.
    """

    def __init__(self, path: str, line: int, field_path: str, message: str):
        super().__init__(f"{path}:{line}: {field_path}: {message}")
        self.path = path
        self.line = line
        self.field = field_path
        self.message = message


class MetaAction(enum.Enum):
    """High-level lateral driving command."""

    GO_STRAIGHT = "GO_STRAIGHT"
    TURN_LEFT = "TURN_LEFT"
    TURN_RIGHT = "TURN_RIGHT"

    @classmethod
    def parse(cls, label: str) -> "MetaAction":
        try:
            return cls(label)
        except ValueError:
            raise ValidationError("meta_action", f"unknown label {label!r}") from None

    def __str__(self) -> str:
        return self.value


class AgentKind(enum.Enum):
    VEHICLE = "VEHICLE"
    PEDESTRIAN = "PEDESTRIAN"
    CYCLIST = "CYCLIST"

    @classmethod
    def parse(cls, label: str) -> "AgentKind":
        try:
            return cls(label)
        except ValueError:
            raise ValidationError("kind", f"unknown agent kind {label!r}") from None


#: Agent kinds treated as vulnerable road users by the safety override.
VRU_KINDS = frozenset({AgentKind.PEDESTRIAN, AgentKind.CYCLIST})


class MapKind(enum.Enum):
    LANE_CENTER = "LANE_CENTER"
    LANE_BOUNDARY = "LANE_BOUNDARY"
    CROSSWALK = "CROSSWALK"

    @classmethod
    def parse(cls, label: str) -> "MapKind":
        try:
            return cls(label)
        except ValueError:
            raise ValidationError("kind", f"unknown map kind {label!r}") from None


def normalize_heading(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    if not math.isfinite(theta):
        raise ValidationError("heading", f"non-finite angle {theta!r}")
    t = math.fmod(theta, TWO_PI)
    if t <= -math.pi:
        t += TWO_PI
    elif t > math.pi:
        t -= TWO_PI
    return t


def _check_finite(path: str, value: float) -> float:
    v = float(value)
    if not math.isfinite(v):
        raise ValidationError(path, f"non-finite value {value!r}")
    return v


def _check_point(path: str, p: Sequence[float]) -> Point:
    if len(p) != 2:
        raise ValidationError(path, f"expected 2 coordinates, got {len(p)}")
    return (_check_finite(path + "[0]", p[0]), _check_finite(path + "[1]", p[1]))


@dataclass(frozen=True)
class EgoState:
    position: Point
    heading: float      # radians in (-pi, pi]
    speed: float        # m/s, >= 0
    accel: float        # m/s^2

    def validate(self, path: str = "ego") -> None:
        _check_point(path + ".position", self.position)
        h = _check_finite(path + ".heading", self.heading)
        if not (-math.pi < h <= math.pi):
            raise ValidationError(path + ".heading", f"{h} outside (-pi, pi]")
        if _check_finite(path + ".speed", self.speed) < 0:
            raise ValidationError(path + ".speed", f"negative speed {self.speed}")
        _check_finite(path + ".accel", self.accel)


@dataclass(frozen=True)
class AgentTrack:
    id: int
    kind: AgentKind
    position: Point
    heading: float
    speed: float
    extent: tuple[float, float]     # (length, width), both > 0
    future: tuple[Point, ...]       # T_F points at 0.5 s steps

    def validate(self, path: str) -> None:
        if not isinstance(self.id, int):
            raise ValidationError(path + ".id", "agent id must be an integer")
        _check_point(path + ".position", self.position)
        h = _check_finite(path + ".heading", self.heading)
        if not (-math.pi < h <= math.pi):
            raise ValidationError(path + ".heading", f"{h} outside (-pi, pi]")
        if _check_finite(path + ".speed", self.speed) < 0:
            raise ValidationError(path + ".speed", f"negative speed {self.speed}")
        length, width = self.extent
        if not (_check_finite(path + ".length", length) > 0):
            raise ValidationError(path + ".length", f"non-positive length {length}")
        if not (_check_finite(path + ".width", width) > 0):
            raise ValidationError(path + ".width", f"non-positive width {width}")
        if len(self.future) != T_F:
            raise ValidationError(
                path + ".future", f"expected {T_F} future points, got {len(self.future)}"
            )
        for k, p in enumerate(self.future):
            _check_point(f"{path}.future[{k}]", p)


@dataclass(frozen=True)
class MapPolyline:
    id: int
    kind: MapKind
    points: tuple[Point, ...]       # exactly POLYLINE_POINTS points

    def validate(self, path: str) -> None:
        if len(self.points) != POLYLINE_POINTS:
            raise ValidationError(
                path + ".points",
                f"expected {POLYLINE_POINTS} points, got {len(self.points)}",
            )
        for k, p in enumerate(self.points):
            _check_point(f"{path}.points[{k}]", p)
        for k in range(len(self.points) - 1):
            if self.points[k] == self.points[k + 1]:
                raise ValidationError(
                    f"{path}.points[{k + 1}]", "consecutive points must be distinct"
                )


@dataclass(frozen=True)
class Trajectory:
    """Future ego waypoints at timestamps 0.5*k seconds, k = 1..T_F."""

    waypoints: tuple[Point, ...]

    def validate(self, path: str = "trajectory") -> None:
        if len(self.waypoints) != T_F:
            raise ValidationError(path, f"expected {T_F} waypoints, got {len(self.waypoints)}")
        for k, p in enumerate(self.waypoints):
            _check_point(f"{path}[{k}]", p)

    def __iter__(self):
        return iter(self.waypoints)

    def __len__(self) -> int:
        return len(self.waypoints)

    def __getitem__(self, k: int) -> Point:
        return self.waypoints[k]


@dataclass(frozen=True)
class Scenario:
    id: str
    ego: EgoState
    agents: tuple[AgentTrack, ...]
    map: tuple[MapPolyline, ...]
    route_intent: MetaAction
    gt_future: Trajectory
    seed: int = 0

    def validate(self) -> None:
        if not self.id:
            raise ValidationError("id", "scenario id must be nonempty")
        if not (0 <= self.seed < (1 << 64)):
            raise ValidationError("seed", f"seed {self.seed} outside u64 range")
        self.ego.validate("ego")
        if len(self.agents) > A_MAX:
            raise ValidationError("agents", f"{len(self.agents)} agents exceed A_MAX={A_MAX}")
        seen: set[int] = set()
        for i, agent in enumerate(self.agents):
            agent.validate(f"agents[{i}]")
            if agent.id in seen:
                raise ValidationError(f"agents[{i}].id", f"duplicate agent id {agent.id}")
            seen.add(agent.id)
        if len(self.map) > M_MAX:
            raise ValidationError("map", f"{len(self.map)} polylines exceed M_MAX={M_MAX}")
        for i, line in enumerate(self.map):
            line.validate(f"map[{i}]")
        self.gt_future.validate("gt_future")


# --- JSONL schema -----------------------------------------------------------
# One object per line:
# {"id", "seed", "ego":{"x","y","heading","speed","accel"},
#  "agents":[{"id","kind","x","y","heading","speed","length","width",
#             "future":[[x,y]*6]}],
#  "map":[{"id","kind","points":[[x,y]*4]}],
#  "route_intent", "gt_future":[[x,y]*6]}


def scenario_to_dict(s: Scenario) -> dict[str, Any]:
    return {
        "id": s.id,
        "seed": s.seed,
        "ego": {
            "x": s.ego.position[0],
            "y": s.ego.position[1],
            "heading": s.ego.heading,
            "speed": s.ego.speed,
            "accel": s.ego.accel,
        },
        "agents": [
            {
                "id": a.id,
                "kind": a.kind.value,
                "x": a.position[0],
                "y": a.position[1],
                "heading": a.heading,
                "speed": a.speed,
                "length": a.extent[0],
                "width": a.extent[1],
                "future": [[p[0], p[1]] for p in a.future],
            }
            for a in s.agents
        ],
        "map": [
            {
                "id": m.id,
                "kind": m.kind.value,
                "points": [[p[0], p[1]] for p in m.points],
            }
            for m in s.map
        ],
        "route_intent": s.route_intent.value,
        "gt_future": [[p[0], p[1]] for p in s.gt_future.waypoints],
    }


def _get(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise ValidationError(f"{path}.{key}" if path else key, "missing field")
    return obj[key]


def _as_float(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(path, f"expected number, got {type(value).__name__}")
    return float(value)


def _as_points(value: Any, path: str) -> tuple[Point, ...]:
    if not isinstance(value, list):
        raise ValidationError(path, "expected a list of [x, y] points")
    pts = []
    for k, p in enumerate(value):
        if not isinstance(p, list) or len(p) != 2:
            raise ValidationError(f"{path}[{k}]", "expected [x, y]")
        pts.append((_as_float(p[0], f"{path}[{k}][0]"), _as_float(p[1], f"{path}[{k}][1]")))
    return tuple(pts)


def scenario_from_dict(obj: Any) -> Scenario:
    if not isinstance(obj, dict):
        raise ValidationError("", "scenario line must be a JSON object")
    ego_obj = _get(obj, "ego", "")
    if not isinstance(ego_obj, dict):
        raise ValidationError("ego", "expected object")
    ego = EgoState(
        position=(_as_float(_get(ego_obj, "x", "ego"), "ego.x"),
                  _as_float(_get(ego_obj, "y", "ego"), "ego.y")),
        heading=_as_float(_get(ego_obj, "heading", "ego"), "ego.heading"),
        speed=_as_float(_get(ego_obj, "speed", "ego"), "ego.speed"),
        accel=_as_float(_get(ego_obj, "accel", "ego"), "ego.accel"),
    )
    agents = []
    agents_obj = _get(obj, "agents", "")
    if not isinstance(agents_obj, list):
        raise ValidationError("agents", "expected list")
    for i, a in enumerate(agents_obj):
        path = f"agents[{i}]"
        if not isinstance(a, dict):
            raise ValidationError(path, "expected object")
        agent_id = _get(a, "id", path)
        if isinstance(agent_id, bool) or not isinstance(agent_id, int):
            raise ValidationError(path + ".id", "expected integer id")
        try:
            kind = AgentKind.parse(_get(a, "kind", path))
        except ValidationError as e:
            raise ValidationError(path + ".kind", e.message) from None
        agents.append(AgentTrack(
            id=agent_id,
            kind=kind,
            position=(_as_float(_get(a, "x", path), path + ".x"),
                      _as_float(_get(a, "y", path), path + ".y")),
            heading=_as_float(_get(a, "heading", path), path + ".heading"),
            speed=_as_float(_get(a, "speed", path), path + ".speed"),
            extent=(_as_float(_get(a, "length", path), path + ".length"),
                    _as_float(_get(a, "width", path), path + ".width")),
            future=_as_points(_get(a, "future", path), path + ".future"),
        ))
    polylines = []
    map_obj = _get(obj, "map", "")
    if not isinstance(map_obj, list):
        raise ValidationError("map", "expected list")
    for i, m in enumerate(map_obj):
        path = f"map[{i}]"
        if not isinstance(m, dict):
            raise ValidationError(path, "expected object")
        line_id = _get(m, "id", path)
        if isinstance(line_id, bool) or not isinstance(line_id, int):
            raise ValidationError(path + ".id", "expected integer id")
        try:
            kind = MapKind.parse(_get(m, "kind", path))
        except ValidationError as e:
            raise ValidationError(path + ".kind", e.message) from None
        polylines.append(MapPolyline(
            id=line_id,
            kind=kind,
            points=_as_points(_get(m, "points", path), path + ".points"),
        ))
    try:
        intent = MetaAction.parse(_get(obj, "route_intent", ""))
    except ValidationError as e:
        raise ValidationError("route_intent", e.message) from None
    scenario_id = _get(obj, "id", "")
    if not isinstance(scenario_id, str):
        raise ValidationError("id", "expected string")
    seed = _get(obj, "seed", "")
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ValidationError("seed", "expected integer")
    scenario = Scenario(
        id=scenario_id,
        ego=ego,
        agents=tuple(agents),
        map=tuple(polylines),
        route_intent=intent,
        gt_future=Trajectory(_as_points(_get(obj, "gt_future", ""), "gt_future")),
        seed=seed,
    )
    scenario.validate()
    return scenario


def load_scenarios(path: str | os.PathLike) -> list[Scenario]:
    """Read a scenario JSONL file, validating every line.

    Raises ScenarioLoadError with the 1-based line number and field path
    on the first schema violation or duplicate scenario id.
    """
    path = os.fspath(path)
    scenarios: list[Scenario] = []
    seen_ids: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = jsonio.loads(line)
            except ValueError as e:
                raise ScenarioLoadError(path, lineno, "", f"invalid JSON: {e}") from None
            try:
                scenario = scenario_from_dict(obj)
            except ValidationError as e:
                raise ScenarioLoadError(path, lineno, e.field, e.message) from None
            if scenario.id in seen_ids:
                raise ScenarioLoadError(path, lineno, "id", f"duplicate scenario id {scenario.id!r}")
            seen_ids.add(scenario.id)
            scenarios.append(scenario)
    return scenarios


def save_scenarios(scenarios: Iterable[Scenario], path: str | os.PathLike) -> None:
    """Write scenarios as canonical JSONL.

    Everything is validated (including cross-scenario id uniqueness)
    before any byte is written, so a failed save leaves no partial file.
    """
    scenarios = list(scenarios)
    seen_ids: set[str] = set()
    for s in scenarios:
        s.validate()
        if s.id in seen_ids:
            raise ValidationError("id", f"duplicate scenario id {s.id!r}")
        seen_ids.add(s.id)
    lines = [jsonio.dumps(scenario_to_dict(s)) for s in scenarios]
    with open(os.fspath(path), "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")
