from __future__ import annotations

import itertools
import json

import pytest
from hypothesis import given, settings, strategies as st

from conftest import FIXTURES, oracle_config
from groundplan.chaincheck import (
    CODE_ERROR,
    MISCHARACTERIZED,
    MISSING_SUBGOAL,
    OTHER,
    PRIMITIVE_FAILURE,
    FailureLabel,
    UnknownPrimitive,
    classify_failure,
    enumerate_states,
    labels_csv,
    verify_chain,
)
from groundplan.orchestrator import Interaction, EpisodeTranscript, load_transcripts, run_episode
from groundplan.parser import PrimitiveCall
from groundplan.primitives import check_precondition, industrial_registry, registry_for
from groundplan.taskgen import ground_truth_chain, industrial_tasks, task_state


def C(name, *args):
    return PrimitiveCall(name, args)


def _brute_force_ok(registry, chain, state, env):
    """Independent check: walk every combination of part choices for part-less grasps."""
    choices = []
    for call in chain:
        if call.name == "grasp" and len(call.args) == 1 and env.object(call.args[0]).parts:
            choices.append(env.object(call.args[0]).parts)
        else:
            choices.append((None,))
    for combo in itertools.product(*choices):
        s = state
        for call, part in zip(chain, combo):
            spec = registry[call.name]
            if check_precondition(spec, s, call.args, env) is not None:
                return False
            args = call.args + ((part,) if part else ())
            s = spec.success_effect(s, args)
    return True


def test_gtsg_chains_pass(service_env, corpus):
    reg = registry_for(service_env, 0.1)
    for spec in corpus:
        initial = task_state(spec, service_env)
        chain = ground_truth_chain(spec)
        result = verify_chain(reg, chain, initial, service_env)
        assert result.ok, result
        assert _brute_force_ok(reg, chain, initial, service_env)


def test_taskboard_chains_pass(taskboard_env):
    reg = industrial_registry()
    for spec in industrial_tasks():
        assert verify_chain(reg, ground_truth_chain(spec), None, taskboard_env).ok


def test_missing_move_violation(service_env):
    initial = service_env.initial.moved("Desk")
    assert initial.location_of("Fork") != "Desk"
    result = verify_chain(registry_for(service_env), [C("grasp", "Fork"), C("move_to", "Desk")], initial, service_env)
    assert not result.ok and result.index == 0
    assert result.message == "robot is not at the Fork's location"


def test_unparameterized_grasp_fails_at_plug(taskboard_env):
    reg = industrial_registry()
    chain = [C("grasp", "charger"), C("plug_in", "charger", "outlet")]
    result = verify_chain(reg, chain, None, taskboard_env)
    assert not result.ok and result.index == 1 and result.rule == "wrong_part"
    assert result.witness.gripper.part != "plug"
    assert not _brute_force_ok(reg, chain, taskboard_env.initial, taskboard_env)
    assert verify_chain(reg, [C("grasp", "charger", "plug"), chain[1]], None, taskboard_env).ok


def test_unparameterized_probe_fails_at_rack(taskboard_env):
    reg = industrial_registry()
    assert verify_chain(reg, [C("grasp", "probe", "handle"), C("place_in_rack", "probe")], None, taskboard_env).ok
    bad = verify_chain(reg, [C("grasp", "probe"), C("place_in_rack", "probe")], None, taskboard_env)
    assert not bad.ok and bad.index == 1


def test_unknown_primitive_is_an_error(service_env):
    with pytest.raises(UnknownPrimitive):
        verify_chain(registry_for(service_env), [C("teleport", "Desk")], None, service_env)


def test_full_scope(taskboard_env):
    reg = industrial_registry()
    states = enumerate_states(reg, taskboard_env)
    assert taskboard_env.initial in states
    assert verify_chain(reg, [C("grasp", "charger", "plug"), C("plug_in", "charger", "outlet")], None, taskboard_env, scope="full").ok
    # fine from the initial state, but once the charger sits in the outlet it is out of reach
    chain = [C("press_button", "blue"), C("grasp", "charger", "plug")]
    assert verify_chain(reg, chain, None, taskboard_env).ok
    result = verify_chain(reg, chain, None, taskboard_env, scope="full")
    assert not result.ok and result.index == 1 and result.witness.fluent("charger_plugged")


def test_gtsg_fixture_matches_corpus(corpus):
    entries = json.loads((FIXTURES / "gtsg_chains.json").read_text())
    assert [e["name"] for e in entries[:50]] == [s.task_id for s in corpus]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from([
    C("grasp", "charger"), C("grasp", "charger", "plug"), C("grasp", "charger", "cable"),
    C("grasp", "probe"), C("grasp", "probe", "handle"), C("plug_in", "charger", "outlet"),
    C("place_in_rack", "probe"), C("press_button", "blue"), C("open_trapdoor"),
]), max_size=5))
def test_verify_chain_agrees_with_brute_force(chain):
    from groundplan.world import build_taskboard_env

    env = build_taskboard_env()
    reg = industrial_registry()
    assert verify_chain(reg, chain, None, env).ok == _brute_force_ok(reg, chain, env.initial, env)


# classification


def test_missing_subgoal_label(service_env, corpus):
    config = oracle_config("plan", faults=frozenset({"omit_move_before_grasp"}))
    tr = run_episode(corpus[0], service_env, registry_for(service_env, 0.0), config)
    label = classify_failure(tr, ground_truth_chain(corpus[0]))
    assert label.label == MISSING_SUBGOAL
    assert "interaction 0" in label.evidence


def test_mischaracterized_label(taskboard_env, charger_task):
    config = oracle_config("fb", faults=frozenset({"omit_grasp_part"}))
    for seed in range(40):
        tr = run_episode(charger_task, taskboard_env, registry_for(taskboard_env, 0.0), config, seed=seed)
        if tr.outcome != "success":
            assert classify_failure(tr).label == MISCHARACTERIZED
            return
    pytest.fail("no failing episode in 40 seeds")


def test_code_error_label(service_env, corpus):
    from test_orchestrator import Scripted, _config

    tr = run_episode(corpus[0], service_env, registry_for(service_env, 0.0), _config("full", Scripted()))
    assert classify_failure(tr).label == CODE_ERROR


def test_primitive_failure_label(service_env, corpus):
    config = oracle_config("plan", 1.0)
    tr = run_episode(corpus[0], service_env, registry_for(service_env, 1.0), config)
    assert classify_failure(tr).label == PRIMITIVE_FAILURE


def test_success_has_no_label(service_env, corpus):
    tr = run_episode(corpus[0], service_env, registry_for(service_env, 0.0), oracle_config("full"))
    assert classify_failure(tr) is None


def test_other_label(service_env, corpus):
    from test_orchestrator import Scripted, _config

    tr = run_episode(corpus[0], service_env, registry_for(service_env, 0.0), _config("full", Scripted(plan="none")))
    assert classify_failure(tr).label == OTHER


def test_label_validation():
    with pytest.raises(ValueError):
        FailureLabel("Gremlins", "")


def test_classification_is_deterministic_and_csv():
    transcripts = load_transcripts(FIXTURES / "transcripts.jsonl")
    first = [classify_failure(t) for t in transcripts]
    assert first == [classify_failure(t) for t in transcripts]
    text = labels_csv(transcripts)
    rows = text.strip().splitlines()
    assert rows[0] == "task_id,repetition,variant,label,evidence"
    assert len(rows) - 1 == sum(1 for f in first if f is not None)
