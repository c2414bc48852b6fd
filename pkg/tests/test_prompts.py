from __future__ import annotations

import pytest

from groundplan.parser import parse_eo_map
from groundplan.primitives import service_registry, skill_headers
from groundplan.prompts import (
    EO_HEADER,
    TEMPLATES,
    UnboundPlaceholder,
    cap_prompt,
    describe_environment,
    eo_prompt,
    executor_followup_prompt,
    executor_initial_prompt,
    planner_prompt,
    render_prompt,
)

PLAN = ["Move to the Desk", "Grasp the Fork", "Move to the Table", "Put down the Fork on the Table"]
TASK = "Move the Fork from the Desk to the Table"


def test_planner_asks_for_tuple(service_env):
    text = planner_prompt(TASK, service_env)
    assert "tuple of strings" in text
    assert TASK in text


def test_executor_without_eo_has_no_section(service_env):
    text = executor_initial_prompt(TASK, PLAN, skill_headers(service_registry()), service_env)
    assert EO_HEADER not in text and "expected outcomes" not in text


def test_executor_with_eo_lists_outcomes(service_env):
    eos = {step: f"outcome {i}" for i, step in enumerate(PLAN)}
    text = executor_initial_prompt(TASK, PLAN, skill_headers(service_registry()), service_env, eos)
    assert EO_HEADER in text and "outcome 3" in text
    assert "move_to" in text and "<code>" in text


def test_eo_prompt_dictionary_has_one_key_per_step(service_env):
    text = eo_prompt(TASK, PLAN, service_env)
    template = text[text.index("dictionary with the expected outcomes"):]
    assert list(parse_eo_map(template)) == PLAN


def test_followup_contents():
    text = executor_followup_prompt("Done", PLAN[1:], reminder="The robot is at the Desk.", current_eo="The Fork should be held.")
    assert text.startswith("Feedback: Done\nThe robot is at the Desk.\n")
    assert "Remaining plan: ['Grasp the Fork'" in text
    assert "The Fork should be held." in text
    bare = executor_followup_prompt("Done", [])
    assert "Remaining plan: []" in bare and "robot is at" not in bare


def test_unbound_placeholder():
    with pytest.raises(UnboundPlaceholder):
        render_prompt("planner", {"task": "x"})
    with pytest.raises(ValueError):
        render_prompt("nonexistent", {})


def test_every_template_renders_with_its_placeholders():
    from string import Template

    for role, template in TEMPLATES.items():
        names = {m.group("named") or m.group("braced") for m in Template.pattern.finditer(template) if m.group("named") or m.group("braced")}
        out = render_prompt(role, {n: f"<{n}>" for n in names})
        assert "$" not in out


def test_environment_description(taskboard_env, service_env):
    text = describe_environment(taskboard_env)
    assert "object_parts" in text and "'plug'" in text
    assert "object_parts" not in describe_environment(service_env)


def test_cap_prompt_requests_full_program(service_env):
    text = cap_prompt(TASK, skill_headers(service_registry()), service_env)
    assert TASK in text and "full sequence" in text
