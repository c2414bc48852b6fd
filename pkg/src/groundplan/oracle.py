"""Rule-based stand-in for the language model, built from the ground-truth chain.

Without faults it plans, describes outcomes and writes code that follows
the ground-truth subgoal chain exactly. Faults reproduce the two planning
failure modes and code-format errors:

``omit_move_before_grasp``
    the executor grasps without first moving to the object;
``omit_grasp_part``
    the executor leaves out the part argument of grasps, unless an expected
    outcome in its prompt names the part;
``emit_unparseable_once``
    the first executor answer has no code tags;
``omit_plan_step``
    the planner folds the first move into the following grasp step.

With ``recover_on_feedback`` the executor reacts to error feedback by
re-emitting the missing or failed calls.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .gateway import Completion, EpisodeContext
from .parser import ParseError, PrimitiveCall, SnippetProgram, format_call, format_program, parse_eo_map, parse_plan
from .prompts import (
    CURRENT_EO_PREFIX,
    ENV_HEADER,
    EO_HEADER,
    FEEDBACK_PREFIX,
    PLAN_PREFIX,
    REMAINING_PREFIX,
    format_dict,
    format_plan,
)

FAULTS = frozenset(
    {"omit_move_before_grasp", "omit_grasp_part", "emit_unparseable_once", "omit_plan_step"}
)
GARBAGE = "I will now carry out this step of the plan with the robot."


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleConfig:
    faults: frozenset = field(default_factory=frozenset)
    recover_on_feedback: bool = False
    # when False, omit_grasp_part also strips the part from expected outcomes
    eo_names_parts: bool = True

    def __post_init__(self):
        unknown = set(self.faults) - FAULTS
        if unknown:
            raise ValueError(f"unknown oracle faults: {sorted(unknown)}")
        object.__setattr__(self, "faults", frozenset(self.faults))


def describe_step(call: PrimitiveCall) -> str:
    a = call.args
    if call.name == "move_to":
        return f"Move to the {a[0]}"
    if call.name == "grasp":
        return f"Grasp the {a[0]}"
    if call.name == "put_down":
        return f"Put down the {a[0]} on the {a[1]}"
    if call.name == "press_button":
        return f"Press the {a[0]} button"
    if call.name == "plug_in":
        return f"Plug the {a[0]} into the {a[1]}"
    if call.name == "place_in_rack":
        return f"Place the {a[0]} in its rack"
    if call.name == "open_trapdoor":
        return "Open the trapdoor"
    return f"Call {format_call(call)}"


def describe_outcome(call: PrimitiveCall, with_part: bool = True) -> str:
    a = call.args
    if call.name == "move_to":
        return f"The robot should be at the {a[0]}."
    if call.name == "grasp":
        if len(a) > 1 and with_part:
            return f"The {a[0]} {a[1]} should be in the robot's gripper."
        return f"The {a[0]} should be in the robot's gripper."
    if call.name == "put_down":
        return f"The {a[0]} should be on the {a[1]}."
    if call.name == "press_button":
        return f"The {a[0]} button should be pressed."
    if call.name == "plug_in":
        return f"The {a[0]} should be plugged into the {a[1]}."
    if call.name == "place_in_rack":
        return f"The {a[0]} should be in its rack."
    if call.name == "open_trapdoor":
        return "The trapdoor should be open."
    return "The step should be completed."


def plan_segments(chain: list[PrimitiveCall], omit_plan_step: bool = False) -> list[tuple[str, int, int]]:
    """(step text, start, end) per plan step over ``chain`` indices."""
    segments = [(describe_step(c), i, i + 1) for i, c in enumerate(chain)]
    if omit_plan_step:
        for k, (_, start, _) in enumerate(segments[:-1]):
            if chain[start].name == "move_to" and chain[start + 1].name == "grasp":
                text, _, end = segments[k + 1]
                segments[k : k + 2] = [(text, start, end)]
                break
    return segments


def _section(text: str, header: str, stop: str) -> str:
    start = text.find(header)
    if start < 0:
        return ""
    end = text.find(stop, start + len(header))
    return text[start : end if end >= 0 else len(text)]


class OracleBackend:
    name = "oracle"

    def __init__(self, config: Optional[OracleConfig] = None):
        self.config = config or OracleConfig()

    def complete(self, messages, role, context: Optional[EpisodeContext]) -> Completion:
        return Completion(oracle_respond(self.config, role, messages, context))


def oracle_respond(
    config: OracleConfig, role: str, messages: list[dict], context: Optional[EpisodeContext]
) -> str:
    if context is None or context.gtsg is None:
        raise OracleError("the oracle needs the episode's ground-truth chain")
    chain = list(context.gtsg)
    prompt = messages[-1]["content"]
    if role == "planner":
        segments = plan_segments(chain, "omit_plan_step" in config.faults)
        context.scratch["step_ends"] = {text: end for text, _, end in segments}
        return "(" + ", ".join(_q(text) for text, _, _ in segments) + ")"
    if role == "eo":
        return _eo_answer(config, chain, prompt, context)
    if role == "executor":
        return _executor_answer(config, chain, messages, context)
    if role == "cap":
        if "emit_unparseable_once" in config.faults and not context.scratch.get("garbage_done"):
            context.scratch["garbage_done"] = True
            return GARBAGE
        calls = _apply_faults(config, chain, list(range(len(chain))), recovering=False, eo_text="")
        return _code(calls)
    if role == "paraphrase":
        task = context.task
        return f"Please take the {task.object} that is on the {task.source} and bring it to the {task.target}."
    raise OracleError(f"the oracle does not serve role {role!r}")


def _q(text: str) -> str:
    return format_plan([text])[1:-1]


def _code(calls: list[PrimitiveCall]) -> str:
    return f"Here is the code.\n<code>\n{format_program(SnippetProgram(tuple(calls)))}</code>"


def _eo_answer(config: OracleConfig, chain, prompt: str, context: EpisodeContext) -> str:
    try:
        steps = list(parse_eo_map(prompt[prompt.find("dictionary with the expected outcomes"):]))
    except ParseError:
        steps = []
    ends = context.scratch.get("step_ends", {})
    with_part = config.eo_names_parts or "omit_grasp_part" not in config.faults
    starts = {}
    prev = 0
    for step in steps:
        end = ends.get(step)
        if end is not None:
            starts[step] = (prev, end)
            prev = end
    out = {}
    for step in steps:
        if step in starts:
            lo, hi = starts[step]
            out[step] = " ".join(describe_outcome(c, with_part) for c in chain[lo:hi])
        else:
            out[step] = "The step should be completed."
    return format_dict(out)


def _feedback(prompt: str) -> Optional[str]:
    if not prompt.startswith(FEEDBACK_PREFIX):
        return None
    return prompt[len(FEEDBACK_PREFIX):].split("\n", 1)[0]


def _plan_in(prompt: str) -> list[str]:
    for prefix in (REMAINING_PREFIX, PLAN_PREFIX):
        idx = prompt.find(prefix)
        if idx >= 0:
            line = prompt[idx + len(prefix):].split("\n", 1)[0]
            if line.strip() == "[]":
                return []
            try:
                return parse_plan(line)
            except ParseError:
                return []
    return []


def _apply_faults(config, chain, indices, recovering: bool, eo_text: str) -> list[PrimitiveCall]:
    calls = []
    for pos, i in enumerate(indices):
        call = chain[i]
        if (
            "omit_move_before_grasp" in config.faults
            and not recovering
            and call.name == "move_to"
            and i + 1 < len(chain)
            and chain[i + 1].name == "grasp"
            and pos + 1 < len(indices)
        ):
            continue
        if "omit_grasp_part" in config.faults and call.name == "grasp" and len(call.args) > 1:
            obj, part = call.args[:2]
            if f"{obj} {part}" not in eo_text:
                call = PrimitiveCall("grasp", (obj,))
        calls.append(call)
    return calls


def _executor_answer(config: OracleConfig, chain, messages, context: EpisodeContext) -> str:
    st = context.scratch.setdefault("exec", {"pointer": 0, "last": None, "garbage_done": False})
    prompt = messages[-1]["content"]
    status = _feedback(prompt)
    recovering = False
    last = st["last"]
    if last is not None and not last["garbage"] and status is not None:
        if status == "Done":
            st["pointer"] = last["end"]
        elif config.recover_on_feedback:
            recovering = True
            if "grasp failed" in status:
                grasps = [i for i in last["indices"] if chain[i].name == "grasp"]
                st["pointer"] = grasps[0] if grasps else last["start"]
            else:
                st["pointer"] = last["start"]
        elif "grasp failed" in status:
            # does not notice the failure
            st["pointer"] = last["end"]

    if "emit_unparseable_once" in config.faults and not st["garbage_done"]:
        st["garbage_done"] = True
        st["last"] = {"garbage": True}
        return GARBAGE

    pointer = st["pointer"]
    n = len(chain)
    ends = context.scratch.get("step_ends", {})
    end = n
    for step in _plan_in(prompt):
        step_end = ends.get(step, n)
        if step_end > pointer:
            end = step_end
            break
    if "omit_move_before_grasp" in config.faults and end < n:
        if chain[end - 1].name == "move_to" and chain[end].name == "grasp":
            end += 1
    if pointer >= n:
        indices = [n - 1]
        start, end = n - 1, n
    else:
        indices = list(range(pointer, end))
        start = pointer
    first = messages[0]["content"] if messages else ""
    eo_text = _section(first, EO_HEADER, ENV_HEADER) + (
        prompt[prompt.find(CURRENT_EO_PREFIX):] if CURRENT_EO_PREFIX in prompt else ""
    )
    calls = _apply_faults(config, chain, indices, recovering, eo_text)
    st["last"] = {"garbage": False, "start": start, "end": end, "indices": indices}
    return _code(calls)
