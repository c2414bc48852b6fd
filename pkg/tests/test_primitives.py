from __future__ import annotations

import json
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from groundplan.primitives import (
    ArgumentError,
    PreconditionViolation,
    StochasticFailure,
    Success,
    check_precondition,
    execute,
    industrial_registry,
    registry_manifest,
    service_registry,
    skill_headers,
    success_outcomes,
)
from groundplan.world import SERVICE_LOCATIONS, WorldState, build_taskboard_env


def _state(env, robot_at, **placements):
    p = dict(env.initial.placement_map)
    p.update({k.replace("_", " "): v for k, v in placements.items()})
    return WorldState.make(robot_at=robot_at, placements=p)


def test_grasp_with_full_gripper(service_env):
    reg = service_registry()
    state = _state(service_env, "Desk", Knife="Desk", Fork="Desk").picked("Fork")
    v = check_precondition(reg["grasp"], state, ("Knife",), service_env)
    assert v.message == "gripper already holds Fork"
    assert v.rule == "gripper_full"


def test_grasp_colocated_ok(service_env):
    state = _state(service_env, "Desk", Knife="Desk")
    assert check_precondition(service_registry()["grasp"], state, ("Knife",), service_env) is None


def test_grasp_not_colocated(service_env):
    state = _state(service_env, "Desk", Knife="Coffee table")
    v = check_precondition(service_registry()["grasp"], state, ("Knife",), service_env)
    assert v.message == "robot is not at the Knife's location"


def test_argument_errors_are_distinct(service_env):
    reg = service_registry()
    with pytest.raises(ArgumentError):
        check_precondition(reg["move_to"], service_env.initial, ("Garage",), service_env)
    with pytest.raises(ArgumentError):
        check_precondition(reg["put_down"], service_env.initial, ("Fork",), service_env)
    out = execute(reg["grasp"], service_env.initial, ("Spoon",), random.Random(0), service_env)
    assert isinstance(out, PreconditionViolation) and out.rule == "argument"


def test_grasp_failure_rate(service_env):
    reg = service_registry(0.1)
    state = _state(service_env, "Desk", Water_Glass="Desk")
    rng = random.Random(1234)
    n = 10000
    failures = sum(isinstance(execute(reg["grasp"], state, ("Water Glass",), rng, service_env), StochasticFailure) for _ in range(n))
    sigma = math.sqrt(0.1 * 0.9 / n)
    assert abs(failures / n - 0.1) <= max(0.01, 3 * sigma)


def test_failed_grasp_leaves_gripper_empty(service_env):
    reg = service_registry(1.0)
    state = _state(service_env, "Desk", Fork="Desk")
    out = execute(reg["grasp"], state, ("Fork",), random.Random(0), service_env)
    assert isinstance(out, StochasticFailure)
    assert out.state.gripper is None and out.state.location_of("Fork") == "Desk"
    assert "grasp failed" in out.message


def test_unparameterized_grasp_part_frequency(taskboard_env):
    reg = industrial_registry()
    rng = random.Random(99)
    n = 10000
    plug = 0
    for _ in range(n):
        out = execute(reg["grasp"], taskboard_env.initial, ("charger",), rng, taskboard_env)
        assert isinstance(out, Success)
        plug += out.state.gripper.part == "plug"
    assert abs(plug / n - 0.5) <= 0.02


@pytest.mark.parametrize("start", SERVICE_LOCATIONS)
def test_move_to_only_changes_location(service_env, start):
    state = service_env.initial.moved(start)
    out = execute(service_registry()["move_to"], state, ("Desk",), random.Random(0), service_env)
    assert isinstance(out, Success)
    assert out.state.robot_at == "Desk"
    assert out.state.placements == state.placements and out.state.gripper == state.gripper


def test_plug_in_wrong_part(taskboard_env):
    state = taskboard_env.initial.picked("charger", "cable")
    out = execute(industrial_registry()["plug_in"], state, ("charger", "outlet"), random.Random(0), taskboard_env)
    assert isinstance(out, PreconditionViolation)
    assert out.message == "charger is grasped by the wrong part"


def test_place_in_rack_by_handle(taskboard_env):
    state = taskboard_env.initial.picked("probe", "handle")
    out = execute(industrial_registry()["place_in_rack"], state, ("probe",), random.Random(0), taskboard_env)
    assert isinstance(out, Success) and out.state.fluent("probe_racked")
    assert out.state.gripper is None


def test_press_button_blue(taskboard_env):
    out = execute(industrial_registry()["press_button"], taskboard_env.initial, ("blue",), random.Random(0), taskboard_env)
    assert isinstance(out, Success) and out.state.fluent("button_blue_pressed")


def test_press_button_needs_empty_gripper(taskboard_env):
    state = taskboard_env.initial.picked("probe", "handle")
    out = execute(industrial_registry()["press_button"], state, ("red",), random.Random(0), taskboard_env)
    assert isinstance(out, PreconditionViolation) and out.rule == "gripper_full"


def test_skill_headers():
    text = skill_headers(service_registry())
    assert text.count("move_to") == 1
    ind = skill_headers(industrial_registry())
    assert "press_button" in ind and "'blue'" in ind
    assert skill_headers({}) == ""


def test_manifest_is_json(service_env):
    manifest = registry_manifest(industrial_registry())
    assert json.loads(json.dumps(manifest)) == manifest
    assert [m["name"] for m in manifest] == list(industrial_registry())


def _gtsg_outcomes_afforded(env, source, obj, target):
    """Independent brute force: every start state with obj at source, any robot location."""
    reg = service_registry(0.0)
    chain = [("move_to", (source,)), ("grasp", (obj,)), ("move_to", (target,)), ("put_down", (obj, target))]
    for robot in env.locations:
        states = {_state(env, robot, **{obj.replace(" ", "_"): source})}
        for i, (name, args) in enumerate(chain):
            nxt = set()
            for s in states:
                assert check_precondition(reg[name], s, args, env) is None, (i, s)
                nxt.update(o.state for o in success_outcomes(reg[name], s, args, env))
            states = nxt


def test_gtsg_affordance_chaining(service_env, corpus):
    for spec in corpus:
        _gtsg_outcomes_afforded(service_env, spec.source, spec.object, spec.target)


def test_parameterized_grasp_outcomes_are_subset(taskboard_env):
    reg = industrial_registry()
    state = taskboard_env.initial
    for item in taskboard_env.objects:
        parent = {o.state for o in success_outcomes(reg["grasp"], state, (item.name,), taskboard_env)}
        assert len(parent) == len(item.parts)
        for part in item.parts:
            child = {o.state for o in success_outcomes(reg["grasp"], state, (item.name, part), taskboard_env)}
            assert child <= parent and len(child) == 1


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), p=st.floats(0, 1))
def test_execute_is_deterministic(seed, p):
    taskboard_env = build_taskboard_env()
    reg = industrial_registry(p)
    a = execute(reg["grasp"], taskboard_env.initial, ("probe",), random.Random(seed), taskboard_env)
    b = execute(reg["grasp"], taskboard_env.initial, ("probe",), random.Random(seed), taskboard_env)
    assert a == b
