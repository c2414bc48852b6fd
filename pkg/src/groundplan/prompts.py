"""Prompt templates for the planner, expected-outcomes and execution modules."""

from __future__ import annotations

from string import Template
from typing import Mapping, Optional, Sequence

from .parser import quote
from .world import Environment, WorldState

EO_HEADER = "Here are the expected outcomes of each step in the plan, which you can use as a guide:"
ENV_HEADER = "Environment:"
FEEDBACK_PREFIX = "Feedback: "
REMAINING_PREFIX = "Remaining plan: "
PLAN_PREFIX = "The plan is: "
CURRENT_EO_PREFIX = "Expected outcome of the next step: "

ROBOTS = {
    "service": "a mobile robot with an arm ending in a gripper",
    "industrial": "a robot arm ending in a gripper",
}
EXEC_ROBOTS = {
    "service": "a mobile robot equipped with one arm with a parallel gripper",
    "industrial": "a fixed robot arm with a parallel gripper, in front of a task board",
}
MOVE_HINTS = {
    "service": (
        " Remember that the robot should always move to a location before interacting"
        " with objects in this location, unless it is already there."
    ),
    "industrial": "",
}

TEMPLATES = {
    "planner": (
        "You are in charge of $robot. Your task is the following: $task\n"
        "Please output a plan, composed of simple actions, to carry out this task.$move_hint"
        " However, you can assume that simple actions (such as grasping or putting down objects)"
        " automatically move the arm to the correct position.\n"
        "Please only output the plan as a tuple of strings, where each step is a string,"
        " without any other text."
    ),
    "eo": (
        "You are in charge of executing the following task: $task. The plan consists of the"
        " following steps: $plan Each of the steps of the plan will be executed with $robot."
        " For each step of the plan, I need you to give the expected outcome of the actions"
        " involved in the step, in physical and visual terms.\n"
        "This should consist of one or two short, simple sentences that are a more complete and"
        " detailed description of the step's outcome. The sentences should describe the final"
        " state of the robot, for example if it should be at a location, have grasped an object"
        " (and what part of the object, if relevant for the task), or where an object should be"
        " put down. You can add some information if the plan is too concise. Here are some"
        " examples, with the plan step first and the expected outcome after:\n"
        "- Put bottle on shelf: The bottle should be on the shelf.\n"
        "- Grasp the mug: The mug should be in the robot's gripper.\n"
        "- Grasp the knife: The knife blade should be in the robot's gripper.\n"
        "For each step of the plan, please briefly describe the expected outcome as shown above."
        " Please try to be concise and focus on the most relevant information. Please fill out"
        " the following python dictionary with the expected outcomes: $dictionary."
        " Only output the dictionary and no other text."
    ),
    "executor-initial": (
        "Context:\n"
        "You are now in charge of $robot. You will be given a high-level task that you will need"
        " to fulfill using this robot, and the corresponding plan, which is a series of simpler"
        " steps. You will need to carry out the task step by step by interacting with the system"
        " using some code primitives. At each step the plan will be updated and you will receive"
        " feedback.\n"
        "The skills are python functions, which allow you to perceive and act on your environment.\n"
        "Skills:\n"
        "Here are the functions and skills, with examples of the syntax:\n"
        "$skills\n"
        "The task and the plan:\n"
        "You are in charge of executing the following task: $task. $plan_prefix$plan\n"
        "${eo_section}"
        "$environment\n"
        "What I need you to do:\n"
        "Please define a function do(), which will contain mostly action primitives to solve the"
        " steps of the plan one by one, starting with the first step. Please output python code,"
        " enclosed between the tags <code> and </code>. Please only use the functions I defined"
        " above and ensure the locations and objects that you pass as arguments are correct."
    ),
    "executor-followup": (
        "$feedback_prefix$status\n"
        "${reminder}"
        "$remaining_prefix$plan\n"
        "${current_eo}"
        "Please define do() again with the code for the next step of the plan, enclosed between"
        " the tags <code> and </code>."
    ),
    "cap": (
        "Context:\n"
        "You are now in charge of $robot. You will be given a high-level task that you will need"
        " to fulfill using this robot.\n"
        "The skills are python functions, which allow you to perceive and act on your environment.\n"
        "Skills:\n"
        "Here are the functions and skills, with examples of the syntax:\n"
        "$skills\n"
        "The task:\n"
        "You are in charge of executing the following task: $task.\n"
        "$environment\n"
        "What I need you to do:\n"
        "Please define a function do(), which will contain the full sequence of action primitives"
        " that solves the task. Please output python code, enclosed between the tags <code> and"
        " </code>. Please only use the functions I defined above and ensure the locations and"
        " objects that you pass as arguments are correct."
    ),
    "paraphrase": (
        "Rewrite the following instruction for a household robot so that it is worded"
        " differently. Keep the name of the object and the names of both locations exactly as"
        " written, and keep the information about where the object currently is."
        " Only output the new instruction.\n"
        "Instruction: $task"
    ),
}

ROLES = tuple(TEMPLATES)


class UnboundPlaceholder(KeyError):
    def __str__(self):
        return f"unbound placeholder {self.args[0]!r}"


def render_prompt(role: str, bindings: Mapping[str, str]) -> str:
    try:
        template = TEMPLATES[role]
    except KeyError:
        raise ValueError(f"unknown prompt role {role!r}") from None
    try:
        return Template(template).substitute(bindings)
    except KeyError as exc:
        raise UnboundPlaceholder(exc.args[0]) from None


def format_plan(plan: Sequence[str]) -> str:
    return "[" + ", ".join(quote(step) for step in plan) + "]"


def format_dict(mapping: Mapping[str, str]) -> str:
    return "{" + ", ".join(f"{quote(k)}: {quote(v)}" for k, v in mapping.items()) + "}"


def describe_environment(env: Environment, state: Optional[WorldState] = None) -> str:
    state = state or env.initial
    lines = [
        ENV_HEADER,
        f"locations = {format_plan(env.locations)}",
        f"objects = {format_plan(env.object_names)}",
    ]
    parted = {o.name: o.parts for o in env.objects if o.parts}
    if parted:
        body = ", ".join(f"{quote(name)}: {format_plan(parts)}" for name, parts in parted.items())
        lines.append(f"object_parts = {{{body}}}")
    where = [f"the robot is at the {state.robot_at}."]
    for name, loc in state.placements:
        where.append(f"The {name} is on the {loc}.")
    if state.gripper:
        where.append(f"The gripper holds {state.gripper.describe()}.")
    lines.append("At the beginning of the trial, " + " ".join(where))
    return "\n".join(lines)


def planner_prompt(task: str, env: Environment) -> str:
    return render_prompt(
        "planner", {"robot": ROBOTS[env.kind], "task": task, "move_hint": MOVE_HINTS[env.kind]}
    )


def eo_prompt(task: str, plan: Sequence[str], env: Environment) -> str:
    return render_prompt(
        "eo",
        {
            "task": task,
            "plan": format_plan(plan),
            "robot": ROBOTS[env.kind],
            "dictionary": format_dict({step: "" for step in plan}),
        },
    )


def executor_initial_prompt(
    task: str,
    plan: Sequence[str],
    skills: str,
    env: Environment,
    eos: Optional[Mapping[str, str]] = None,
) -> str:
    eo_section = f"{EO_HEADER}\n{format_dict(eos)}\n" if eos is not None else ""
    return render_prompt(
        "executor-initial",
        {
            "robot": EXEC_ROBOTS[env.kind],
            "skills": skills,
            "task": task,
            "plan_prefix": PLAN_PREFIX,
            "plan": format_plan(plan),
            "eo_section": eo_section,
            "environment": describe_environment(env),
        },
    )


def executor_followup_prompt(
    status: str,
    remaining: Sequence[str],
    reminder: Optional[str] = None,
    current_eo: Optional[str] = None,
) -> str:
    return render_prompt(
        "executor-followup",
        {
            "feedback_prefix": FEEDBACK_PREFIX,
            "status": status,
            "reminder": f"{reminder}\n" if reminder else "",
            "remaining_prefix": REMAINING_PREFIX,
            "plan": format_plan(remaining),
            "current_eo": f"{CURRENT_EO_PREFIX}{current_eo}\n" if current_eo else "",
        },
    )


def cap_prompt(task: str, skills: str, env: Environment) -> str:
    return render_prompt(
        "cap",
        {
            "robot": EXEC_ROBOTS[env.kind],
            "skills": skills,
            "task": task,
            "environment": describe_environment(env),
        },
    )


def paraphrase_prompt(task: str) -> str:
    return render_prompt("paraphrase", {"task": task})
