"""Symbolic world model: locations, objects, states, environments and goals.

States are immutable and hashable so they can be collected into sets when
enumerating option outcomes.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Union

SERVICE_LOCATIONS = ("Coffee table", "Kitchen table", "Desk", "Kitchen counter", "Table")
SERVICE_OBJECTS = (
    "Water Glass",
    "Pills",
    "Fork",
    "Mouse",
    "Knife",
    "Screwdriver",
    "Plate",
    "Cupcake",
)

TASKBOARD_FLUENTS = (
    "button_blue_pressed",
    "button_red_pressed",
    "probe_cable_plugged",
    "trapdoor_open",
    "charger_plugged",
    "probe_racked",
)


class UnknownName(KeyError):
    """A goal or state refers to a name the environment does not define."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown name"


@dataclass(frozen=True)
class ObjectItem:
    name: str
    parts: tuple[str, ...] = ()


@dataclass(frozen=True)
class Grip:
    """Gripper contents: an object, optionally held by one of its parts."""

    object: str
    part: Optional[str] = None

    def describe(self) -> str:
        if self.part:
            return f"the {self.object} (held by the {self.part})"
        return f"the {self.object}"


@dataclass(frozen=True)
class WorldState:
    robot_at: str
    gripper: Optional[Grip] = None
    placements: tuple[tuple[str, str], ...] = ()
    fluents: tuple[tuple[str, bool], ...] = ()
    # fluent names in the order they first became true
    history: tuple[str, ...] = ()

    @classmethod
    def make(
        cls,
        robot_at: str,
        placements: Mapping[str, str],
        gripper: Optional[Grip] = None,
        fluents: Optional[Mapping[str, bool]] = None,
        history: Iterable[str] = (),
    ) -> "WorldState":
        return cls(
            robot_at=robot_at,
            gripper=gripper,
            placements=tuple(sorted(placements.items())),
            fluents=tuple(sorted((fluents or {}).items())),
            history=tuple(history),
        )

    @property
    def placement_map(self) -> dict[str, str]:
        return dict(self.placements)

    @property
    def fluent_map(self) -> dict[str, bool]:
        return dict(self.fluents)

    def location_of(self, obj: str) -> Optional[str]:
        for name, loc in self.placements:
            if name == obj:
                return loc
        return None

    def holds(self, obj: str) -> bool:
        return self.gripper is not None and self.gripper.object == obj

    def fluent(self, name: str) -> bool:
        for key, value in self.fluents:
            if key == name:
                return value
        raise UnknownName(f"unknown fluent {name!r}")

    def moved(self, location: str) -> "WorldState":
        return replace(self, robot_at=location)

    def picked(self, obj: str, part: Optional[str] = None) -> "WorldState":
        placements = tuple((n, l) for n, l in self.placements if n != obj)
        return replace(self, placements=placements, gripper=Grip(obj, part))

    def placed(self, obj: str, location: str) -> "WorldState":
        placements = dict(self.placements)
        placements[obj] = location
        gripper = None if self.holds(obj) else self.gripper
        return replace(self, placements=tuple(sorted(placements.items())), gripper=gripper)

    def with_fluent(self, name: str, value: bool = True) -> "WorldState":
        fluents = dict(self.fluents)
        fluents[name] = value
        history = self.history
        if value and name not in history:
            history = history + (name,)
        return replace(self, fluents=tuple(sorted(fluents.items())), history=history)

    def describe(self) -> str:
        """Short reminder of robot position and gripper contents."""
        held = self.gripper.describe() if self.gripper else "nothing"
        return f"The robot is at the {self.robot_at}. The gripper holds {held}."

    def to_dict(self) -> dict:
        return {
            "robot_at": self.robot_at,
            "gripper": None
            if self.gripper is None
            else {"object": self.gripper.object, "part": self.gripper.part},
            "placements": dict(self.placements),
            "fluents": dict(self.fluents),
            "history": list(self.history),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "WorldState":
        grip = data.get("gripper")
        return cls.make(
            robot_at=data["robot_at"],
            placements=data.get("placements", {}),
            gripper=Grip(grip["object"], grip.get("part")) if grip else None,
            fluents=data.get("fluents", {}),
            history=data.get("history", ()),
        )


@dataclass(frozen=True)
class Environment:
    name: str
    kind: str  # "service" | "industrial"
    locations: tuple[str, ...]
    objects: tuple[ObjectItem, ...]
    initial: WorldState

    def object(self, name: str) -> ObjectItem:
        for item in self.objects:
            if item.name == name:
                return item
        raise UnknownName(f"unknown object {name!r}")

    @property
    def object_names(self) -> tuple[str, ...]:
        return tuple(o.name for o in self.objects)

    def has_object(self, name: str) -> bool:
        return any(o.name == name for o in self.objects)

    def with_initial(self, state: WorldState) -> "Environment":
        return replace(self, initial=state)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "locations": list(self.locations),
            "objects": [{"name": o.name, "parts": list(o.parts)} for o in self.objects],
            "initial": self.initial.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Environment":
        return cls(
            name=data["name"],
            kind=data["kind"],
            locations=tuple(data["locations"]),
            objects=tuple(ObjectItem(o["name"], tuple(o.get("parts", ()))) for o in data["objects"]),
            initial=WorldState.from_dict(data["initial"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Environment":
        return cls.from_dict(json.loads(text))


def validate_state(state: WorldState, env: Environment) -> list[str]:
    """Return every invariant violation of ``state`` in ``env`` (empty means valid)."""
    problems = []
    if state.robot_at not in env.locations:
        problems.append(f"unknown location {state.robot_at!r} for the robot")
    placed = [name for name, _ in state.placements]
    for name, loc in state.placements:
        if not env.has_object(name):
            problems.append(f"unknown object {name!r}")
        if loc not in env.locations:
            problems.append(f"unknown location {loc!r} for {name}")
    if len(set(placed)) != len(placed):
        problems.append("object placed twice")
    if state.gripper is not None:
        grip = state.gripper
        if not env.has_object(grip.object):
            problems.append(f"unknown object {grip.object!r} in the gripper")
        else:
            parts = env.object(grip.object).parts
            if grip.part is not None and grip.part not in parts:
                problems.append(f"{grip.object} has no part {grip.part!r}")
        if grip.object in placed:
            problems.append(f"duplicate containment: {grip.object} is both placed and gripped")
    held = {state.gripper.object} if state.gripper else set()
    missing = set(env.object_names) - set(placed) - held
    for name in sorted(missing):
        problems.append(f"{name} is neither placed nor gripped")
    env_fluents = set(env.initial.fluent_map)
    for name, _ in state.fluents:
        if name not in env_fluents:
            problems.append(f"unknown fluent {name!r}")
    return problems


# Goal conditions


@dataclass(frozen=True)
class ObjectAt:
    object: str
    location: str

    def holds(self, state: WorldState) -> bool:
        return state.location_of(self.object) == self.location

    def check_names(self, env: Environment) -> None:
        env.object(self.object)
        if self.location not in env.locations:
            raise UnknownName(f"unknown location {self.location!r}")

    def to_dict(self) -> dict:
        return {"type": "object_at", "object": self.object, "location": self.location}


@dataclass(frozen=True)
class FluentTrue:
    name: str

    def holds(self, state: WorldState) -> bool:
        return state.fluent(self.name)

    def check_names(self, env: Environment) -> None:
        if self.name not in env.initial.fluent_map:
            raise UnknownName(f"unknown fluent {self.name!r}")

    def to_dict(self) -> dict:
        return {"type": "fluent", "name": self.name}


@dataclass(frozen=True)
class GraspedByPart:
    object: str
    part: str

    def holds(self, state: WorldState) -> bool:
        return state.gripper == Grip(self.object, self.part)

    def check_names(self, env: Environment) -> None:
        if self.part not in env.object(self.object).parts:
            raise UnknownName(f"{self.object} has no part {self.part!r}")

    def to_dict(self) -> dict:
        return {"type": "grasped_by_part", "object": self.object, "part": self.part}


Condition = Union[ObjectAt, FluentTrue, GraspedByPart]


def condition_from_dict(data: Mapping) -> Condition:
    kind = data["type"]
    if kind == "object_at":
        return ObjectAt(data["object"], data["location"])
    if kind == "fluent":
        return FluentTrue(data["name"])
    if kind == "grasped_by_part":
        return GraspedByPart(data["object"], data["part"])
    raise ValueError(f"unknown condition type {kind!r}")


@dataclass(frozen=True)
class GoalSpec:
    """Conjunction of conditions, optionally requiring fluents to have become true in order."""

    conditions: tuple[Condition, ...]
    order: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "conditions": [c.to_dict() for c in self.conditions],
            "order": list(self.order),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "GoalSpec":
        return cls(
            conditions=tuple(condition_from_dict(c) for c in data["conditions"]),
            order=tuple(data.get("order", ())),
        )


def check_goal_names(goal: GoalSpec, env: Environment) -> None:
    for cond in goal.conditions:
        cond.check_names(env)
    for name in goal.order:
        FluentTrue(name).check_names(env)


def goal_satisfied(state: WorldState, goal: GoalSpec, env: Optional[Environment] = None) -> bool:
    """True iff every condition holds and ordered fluents became true in the given order.

    Raises UnknownName if a condition refers to something neither ``env`` nor
    the state knows about.
    """
    if env is not None:
        check_goal_names(goal, env)
    for cond in goal.conditions:
        if isinstance(cond, ObjectAt):
            known = state.location_of(cond.object) is not None or state.holds(cond.object)
            if not known:
                raise UnknownName(f"unknown object {cond.object!r}")
        if not cond.holds(state):
            return False
    if goal.order:
        for name in goal.order:
            state.fluent(name)
        seen = [name for name in state.history if name in goal.order]
        if seen != list(goal.order):
            return False
    return True


# Environment builders


def build_service_env() -> Environment:
    objects = tuple(ObjectItem(name) for name in SERVICE_OBJECTS)
    # deterministic default layout: round-robin over the locations, starting at the Kitchen table
    placements = {
        name: SERVICE_LOCATIONS[(i + 1) % len(SERVICE_LOCATIONS)] for i, name in enumerate(SERVICE_OBJECTS)
    }
    initial = WorldState.make(robot_at="Table", placements=placements)
    return Environment("service", "service", SERVICE_LOCATIONS, objects, initial)


def build_taskboard_env() -> Environment:
    objects = (
        ObjectItem("charger", ("plug", "cable")),
        ObjectItem("probe", ("handle", "body")),
        ObjectItem("probe cable", ("plug", "cable")),
    )
    locations = ("workcell", "outlet", "board", "rack")
    initial = WorldState.make(
        robot_at="workcell",
        placements={"charger": "workcell", "probe": "workcell", "probe cable": "workcell"},
        fluents={name: False for name in TASKBOARD_FLUENTS},
    )
    return Environment("taskboard", "industrial", locations, objects, initial)


def place_for_task(
    env: Environment, obj: str, source: str, seed: int
) -> WorldState:
    """Initial state for a pick-and-place task: ``obj`` at ``source``.

    Other objects and the robot are placed by a seeded draw; the robot never
    starts at ``source``.
    """
    rng = random.Random(seed)
    placements = {}
    for item in env.objects:
        placements[item.name] = source if item.name == obj else rng.choice(env.locations)
    starts = [loc for loc in env.locations if loc != source] or [source]
    return WorldState.make(
        robot_at=rng.choice(starts),
        placements=placements,
        fluents=env.initial.fluent_map,
    )
