"""Motion primitives modelled as options.

Each primitive has an initialization set (its precondition), an atomic
success effect standing in for the intra-option policy, and an optional
Bernoulli failure model. A grasp without a part argument on a multi-part
object lands on one of the object's parts, drawn uniformly, so its outcome
set is the union of the outcome sets of the part-parameterized grasps.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

from .world import Environment, WorldState

COLORS = ("blue", "red")

# (object, target) -> fluent set when plugged
PLUG_SOCKETS = {
    ("charger", "outlet"): "charger_plugged",
    ("probe cable", "board"): "probe_cable_plugged",
}
PLUG_PART = "plug"
RACK_RULES = {"probe": ("handle", "rack", "probe_racked")}

DEFAULT_GRASP_FAILURE = 0.10


class ArgumentError(ValueError):
    """Arguments do not match a primitive's parameter schema."""


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str

    def __str__(self):
        return self.message


@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # location | object | part | color
    optional: bool = False


Args = tuple[str, ...]
Precondition = Callable[[WorldState, Args], Optional[Violation]]
Effect = Callable[[WorldState, Args], WorldState]


@dataclass(frozen=True)
class PrimitiveSpec:
    name: str
    params: tuple[Param, ...]
    precondition: Precondition
    success_effect: Effect
    doc: str
    example: Args
    failure_prob: float = 0.0
    failure_effect: Optional[Effect] = None
    failure_message: str = ""
    # expands args into the concrete argument tuples the option may realize
    outcome_sampler: Optional[Callable[[WorldState, Args, Environment], list[Args]]] = None

    def __post_init__(self):
        if not 0.0 <= self.failure_prob <= 1.0:
            raise ValueError(f"failure probability must be in [0, 1], got {self.failure_prob}")

    def signature(self) -> str:
        parts = []
        for p in self.params:
            parts.append(f"{p.name}: str = None" if p.optional else f"{p.name}: str")
        return f"{self.name}({', '.join(parts)})"


@dataclass(frozen=True)
class Success:
    state: WorldState
    args: Args = ()


@dataclass(frozen=True)
class PreconditionViolation:
    message: str
    rule: str = "precondition"


@dataclass(frozen=True)
class StochasticFailure:
    message: str
    state: WorldState


ExecOutcome = Union[Success, PreconditionViolation, StochasticFailure]

Registry = dict[str, PrimitiveSpec]


def check_arguments(spec: PrimitiveSpec, args: Sequence[str], env: Environment) -> None:
    required = sum(1 for p in spec.params if not p.optional)
    if not required <= len(args) <= len(spec.params):
        expected = str(required) if required == len(spec.params) else f"{required} to {len(spec.params)}"
        raise ArgumentError(
            f"{spec.name} takes {expected} argument(s) but {len(args)} were given"
        )
    obj = None
    for param, value in zip(spec.params, args):
        if param.kind == "location" and value not in env.locations:
            raise ArgumentError(f"unknown location {value!r} in {spec.name}")
        if param.kind == "object":
            if not env.has_object(value):
                raise ArgumentError(f"unknown object {value!r} in {spec.name}")
            obj = value
        if param.kind == "part":
            parts = env.object(obj).parts if obj else ()
            if value not in parts:
                raise ArgumentError(f"{obj} has no part {value!r}")
        if param.kind == "color" and value not in COLORS:
            raise ArgumentError(f"unknown button color {value!r}; expected one of {', '.join(COLORS)}")


def check_precondition(
    spec: PrimitiveSpec, state: WorldState, args: Sequence[str], env: Environment
) -> Optional[Violation]:
    """None if ``state`` is in the initialization set for ``args``, else the violation.

    Raises ArgumentError when ``args`` do not fit the parameter schema.
    """
    check_arguments(spec, args, env)
    return spec.precondition(state, tuple(args))


def success_outcomes(
    spec: PrimitiveSpec, state: WorldState, args: Sequence[str], env: Environment
) -> list[Success]:
    """Every success outcome reachable from ``state``; assumes the precondition holds."""
    args = tuple(args)
    variants = spec.outcome_sampler(state, args, env) if spec.outcome_sampler else [args]
    return [Success(spec.success_effect(state, v), v) for v in variants]


def execute(
    spec: PrimitiveSpec,
    state: WorldState,
    args: Sequence[str],
    rng: random.Random,
    env: Environment,
) -> ExecOutcome:
    args = tuple(args)
    try:
        violation = check_precondition(spec, state, args, env)
    except ArgumentError as exc:
        return PreconditionViolation(str(exc), "argument")
    if violation is not None:
        return PreconditionViolation(violation.message, violation.rule)
    # one draw per call keeps rng streams aligned whatever p is
    if rng.random() < spec.failure_prob:
        effect = spec.failure_effect or (lambda s, a: s)
        return StochasticFailure(spec.failure_message.format(*args), effect(state, args))
    variants = spec.outcome_sampler(state, args, env) if spec.outcome_sampler else [args]
    chosen = variants[0] if len(variants) == 1 else rng.choice(variants)
    return Success(spec.success_effect(state, chosen), chosen)


# preconditions and effects


def _holding_violation(state: WorldState, obj: str) -> Optional[Violation]:
    if not state.holds(obj):
        return Violation("not_holding", f"{obj} is not in the gripper")
    return None


def _grasp_pre(state: WorldState, args: Args) -> Optional[Violation]:
    obj = args[0]
    if state.gripper is not None:
        return Violation("gripper_full", f"gripper already holds {state.gripper.object}")
    if state.location_of(obj) != state.robot_at:
        return Violation("not_colocated", f"robot is not at the {obj}'s location")
    return None


def _grasp_effect(state: WorldState, args: Args) -> WorldState:
    return state.picked(args[0], args[1] if len(args) > 1 else None)


def _grasp_variants(state: WorldState, args: Args, env: Environment) -> list[Args]:
    if len(args) > 1:
        return [args]
    parts = env.object(args[0]).parts
    if not parts:
        return [args]
    return [(args[0], part) for part in parts]


def _move_pre(state: WorldState, args: Args) -> Optional[Violation]:
    return None


def _put_down_pre(state: WorldState, args: Args) -> Optional[Violation]:
    obj, loc = args
    violation = _holding_violation(state, obj)
    if violation:
        return violation
    if state.robot_at != loc:
        return Violation("not_at_location", f"robot is not at the {loc}")
    return None


def _empty_gripper(action: str) -> Precondition:
    def pre(state: WorldState, args: Args) -> Optional[Violation]:
        if state.gripper is not None:
            return Violation("gripper_full", f"gripper must be empty to {action}")
        return None

    return pre


def _plug_pre(state: WorldState, args: Args) -> Optional[Violation]:
    obj, target = args
    violation = _holding_violation(state, obj)
    if violation:
        return violation
    if (obj, target) not in PLUG_SOCKETS:
        return Violation("wrong_target", f"{obj} cannot be plugged into the {target}")
    if state.gripper.part not in (PLUG_PART, None):
        return Violation("wrong_part", f"{obj} is grasped by the wrong part")
    return None


def _plug_effect(state: WorldState, args: Args) -> WorldState:
    obj, target = args
    return state.placed(obj, target).with_fluent(PLUG_SOCKETS[(obj, target)])


def _rack_pre(state: WorldState, args: Args) -> Optional[Violation]:
    obj = args[0]
    violation = _holding_violation(state, obj)
    if violation:
        return violation
    if obj not in RACK_RULES:
        return Violation("wrong_target", f"{obj} has no rack")
    if state.gripper.part not in (RACK_RULES[obj][0], None):
        return Violation("wrong_part", f"{obj} is grasped by the wrong part")
    return None


def _rack_effect(state: WorldState, args: Args) -> WorldState:
    _, location, fluent = RACK_RULES[args[0]]
    return state.placed(args[0], location).with_fluent(fluent)


def _grasp(with_part: bool, failure_prob: float) -> PrimitiveSpec:
    params = (Param("obj", "object"),)
    example: Args = ("Fork",)
    doc = "Grasp an object at the robot's location. The gripper must be empty."
    if with_part:
        params += (Param("part", "part", optional=True),)
        example = ("charger", "plug")
        doc = (
            "Grasp an object, optionally by a given part. The gripper must be empty. "
            "Without a part, any part of the object may end up in the gripper."
        )
    return PrimitiveSpec(
        name="grasp",
        params=params,
        precondition=_grasp_pre,
        success_effect=_grasp_effect,
        outcome_sampler=_grasp_variants,
        doc=doc,
        example=example,
        failure_prob=failure_prob,
        failure_message="grasp failed: the {0} slipped out of the gripper",
    )


def service_registry(grasp_failure_prob: float = DEFAULT_GRASP_FAILURE) -> Registry:
    specs = [
        PrimitiveSpec(
            name="move_to",
            params=(Param("location", "location"),),
            precondition=_move_pre,
            success_effect=lambda s, a: s.moved(a[0]),
            doc="Move the robot to a location.",
            example=("Kitchen table",),
        ),
        _grasp(with_part=False, failure_prob=grasp_failure_prob),
        PrimitiveSpec(
            name="put_down",
            params=(Param("obj", "object"), Param("location", "location")),
            precondition=_put_down_pre,
            success_effect=lambda s, a: s.placed(a[0], a[1]),
            doc="Put the held object down at a location. The robot must be at that location.",
            example=("Fork", "Desk"),
        ),
    ]
    return {spec.name: spec for spec in specs}


def industrial_registry(grasp_failure_prob: float = 0.0) -> Registry:
    specs = [
        _grasp(with_part=True, failure_prob=grasp_failure_prob),
        PrimitiveSpec(
            name="press_button",
            params=(Param("color", "color"),),
            precondition=_empty_gripper("press a button"),
            success_effect=lambda s, a: s.with_fluent(f"button_{a[0]}_pressed"),
            doc="Press the button of the given color on the task board. The gripper must be empty.",
            example=("blue",),
        ),
        PrimitiveSpec(
            name="plug_in",
            params=(Param("obj", "object"), Param("target", "location")),
            precondition=_plug_pre,
            success_effect=_plug_effect,
            doc="Plug the held object into a socket. The object must be held by its plug.",
            example=("charger", "outlet"),
        ),
        PrimitiveSpec(
            name="place_in_rack",
            params=(Param("obj", "object"),),
            precondition=_rack_pre,
            success_effect=_rack_effect,
            doc="Place the held object in its rack. The object must be held by its handle.",
            example=("probe",),
        ),
        PrimitiveSpec(
            name="open_trapdoor",
            params=(),
            precondition=_empty_gripper("open the trapdoor"),
            success_effect=lambda s, a: s.with_fluent("trapdoor_open"),
            doc="Open the trapdoor of the task board. The gripper must be empty.",
            example=(),
        ),
    ]
    return {spec.name: spec for spec in specs}


def registry_for(env: Environment, grasp_failure_prob: Optional[float] = None) -> Registry:
    if env.kind == "industrial":
        return industrial_registry(0.0 if grasp_failure_prob is None else grasp_failure_prob)
    if grasp_failure_prob is None:
        grasp_failure_prob = DEFAULT_GRASP_FAILURE
    return service_registry(grasp_failure_prob)


def skill_headers(registry: Registry) -> str:
    """Prompt-facing text: one header and one usage example per primitive."""
    blocks = []
    for spec in registry.values():
        example = ", ".join(f"{p.name}={v!r}" for p, v in zip(spec.params, spec.example))
        usage = f"Usage example: {example}" if example else "Usage example: no arguments"
        blocks.append(f'def {spec.signature()}:\n    """{spec.doc} {usage}."""')
    return "\n".join(blocks)


def registry_manifest(registry: Registry) -> list[dict]:
    return [
        {
            "name": spec.name,
            "params": [
                {"name": p.name, "kind": p.kind, "optional": p.optional} for p in spec.params
            ],
            "failure_prob": spec.failure_prob,
            "header": f"def {spec.signature()}",
            "doc": spec.doc,
        }
        for spec in registry.values()
    ]
