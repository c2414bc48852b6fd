from __future__ import annotations

import json

import pytest
from hypothesis import given, settings, strategies as st

from groundplan.primitives import execute, registry_for
from groundplan.world import (
    FluentTrue,
    GoalSpec,
    GraspedByPart,
    Grip,
    ObjectAt,
    SERVICE_LOCATIONS,
    SERVICE_OBJECTS,
    UnknownName,
    WorldState,
    build_service_env,
    build_taskboard_env,
    check_goal_names,
    goal_satisfied,
    place_for_task,
    validate_state,
)
import random


def test_initial_service_state_is_valid(service_env):
    assert validate_state(service_env.initial, service_env) == []


def test_initial_taskboard_state_is_valid(taskboard_env):
    assert validate_state(taskboard_env.initial, taskboard_env) == []


def test_duplicate_containment(service_env):
    state = WorldState(
        robot_at="Desk",
        gripper=Grip("Fork"),
        placements=service_env.initial.placements,
    )
    problems = validate_state(state, service_env)
    assert any("duplicate containment" in p for p in problems)


def test_unknown_location(service_env):
    state = WorldState.make(robot_at="Garage", placements=service_env.initial.placement_map)
    assert any("unknown location" in p for p in validate_state(state, service_env))


def test_missing_object(service_env):
    placements = dict(service_env.initial.placement_map)
    del placements["Fork"]
    state = WorldState.make(robot_at="Desk", placements=placements)
    assert any("neither placed nor gripped" in p for p in validate_state(state, service_env))


def test_goal_object_at(service_env):
    goal = GoalSpec((ObjectAt("Water Glass", "Coffee table"),))
    moved = service_env.initial.placed("Water Glass", "Coffee table")
    assert goal_satisfied(moved, goal, service_env)
    assert service_env.initial.location_of("Water Glass") == "Kitchen table"
    assert not goal_satisfied(service_env.initial, goal, service_env)


def test_goal_unknown_name_raises(service_env):
    with pytest.raises(UnknownName):
        goal_satisfied(service_env.initial, GoalSpec((ObjectAt("Spoon", "Desk"),)), service_env)
    with pytest.raises(UnknownName):
        check_goal_names(GoalSpec((ObjectAt("Fork", "Garage"),)), service_env)


ORDER = ("button_blue_pressed", "probe_cable_plugged", "button_red_pressed", "trapdoor_open")


def _taskboard_goal():
    return GoalSpec(tuple(FluentTrue(f) for f in ORDER), order=ORDER)


def test_ordered_taskboard_goal(taskboard_env):
    state = taskboard_env.initial
    for f in ORDER:
        state = state.with_fluent(f)
    assert goal_satisfied(state, _taskboard_goal(), taskboard_env)


def test_ordered_goal_rejects_wrong_order(taskboard_env):
    state = taskboard_env.initial
    for f in reversed(ORDER):
        state = state.with_fluent(f)
    assert all(state.fluent(f) for f in ORDER)
    assert not goal_satisfied(state, _taskboard_goal(), taskboard_env)


def test_grasped_by_part(taskboard_env):
    state = taskboard_env.initial.picked("charger", "plug")
    assert GraspedByPart("charger", "plug").holds(state)
    assert not GraspedByPart("charger", "cable").holds(state)


def test_state_round_trip(service_env, taskboard_env):
    for state in (service_env.initial.picked("Fork"), taskboard_env.initial.picked("probe", "handle").with_fluent("trapdoor_open")):
        assert WorldState.from_dict(json.loads(json.dumps(state.to_dict()))) == state


def test_environment_json_round_trip(service_env, taskboard_env):
    for env in (service_env, taskboard_env):
        assert type(env).from_json(env.to_json()) == env


def test_describe_mentions_location_and_gripper(service_env):
    text = service_env.initial.picked("Pills").describe()
    assert "Table" in text and "Pills" in text


def test_place_for_task_puts_object_and_keeps_robot_away(service_env):
    for seed in range(50):
        state = place_for_task(service_env, "Knife", "Desk", seed)
        assert state.location_of("Knife") == "Desk"
        assert state.robot_at != "Desk"
        assert validate_state(state, service_env) == []
    assert place_for_task(service_env, "Knife", "Desk", 3) == place_for_task(service_env, "Knife", "Desk", 3)


def _object_count(state):
    return len(state.placements) + (1 if state.gripper else 0)


@settings(max_examples=60, deadline=None)
@given(
    env_name=st.sampled_from(["service", "taskboard"]),
    seed=st.integers(0, 2**32 - 1),
    steps=st.integers(1, 30),
)
def test_successful_transitions_preserve_validity(env_name, seed, steps):
    env = build_service_env() if env_name == "service" else build_taskboard_env()
    registry = registry_for(env, 0.2)
    rng = random.Random(seed)
    state = env.initial
    names = list(registry)
    for _ in range(steps):
        spec = registry[rng.choice(names)]
        args = []
        for p in spec.params:
            if p.kind == "location":
                args.append(rng.choice(env.locations))
            elif p.kind == "object":
                args.append(rng.choice(env.object_names))
            elif p.kind == "part":
                if rng.random() < 0.5:
                    break
                args.append(rng.choice(env.object(args[0]).parts))
            elif p.kind == "color":
                args.append(rng.choice(["blue", "red"]))
        outcome = execute(spec, state, args, rng, env)
        state = getattr(outcome, "state", state)
        assert validate_state(state, env) == []
        assert _object_count(state) == len(env.objects)


@settings(max_examples=50, deadline=None)
@given(obj=st.sampled_from(SERVICE_OBJECTS), loc=st.sampled_from(SERVICE_LOCATIONS))
def test_goal_check_is_pure(obj, loc):
    env = build_service_env()
    goal = GoalSpec((ObjectAt(obj, loc),))
    state = env.initial
    first = goal_satisfied(state, goal, env)
    assert goal_satisfied(state, goal, env) == first
    assert state == env.initial
