"""The plan / expected-outcomes / execute / feedback loop.

One episode runs the planner and expected-outcomes modules once, then
prompts the execution module step by step. Each snippet is first checked
in a digital twin (preconditions only, no stochastic outcomes); accepted
snippets run in the environment. Ablation variants switch modules off.
"""

from __future__ import annotations

import json
import logging
import math
import random
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Union

from .gateway import ChatSession, EpisodeContext, GatewayError, GenerationRecord
from .parser import ParseError, PrimitiveCall, SnippetProgram, extract_code, parse_eo_map, parse_plan, parse_snippet
from .primitives import (
    ArgumentError,
    PreconditionViolation,
    Registry,
    StochasticFailure,
    Success,
    check_precondition,
    execute,
    skill_headers,
)
from .prompts import (
    cap_prompt,
    eo_prompt,
    executor_followup_prompt,
    executor_initial_prompt,
    planner_prompt,
)
from .taskgen import TaskSpec, ground_truth_chain, resolve_instruction, task_state
from .world import Environment, WorldState, goal_satisfied

logger = logging.getLogger(__name__)

SUCCESS = "success"
TIMEOUT = "timeout"
FAILED = "failed"  # open-loop run finished without reaching the goal
ABORTED = "aborted"

VARIANT_FLAGS = {
    "cap": dict(use_planner=False, use_eo=False, use_feedback=False, single_shot=True),
    "plan": dict(use_planner=True, use_eo=False, use_feedback=False, single_shot=False),
    "eo": dict(use_planner=True, use_eo=True, use_feedback=False, single_shot=False),
    "fb": dict(use_planner=True, use_eo=False, use_feedback=True, single_shot=False),
    "full": dict(use_planner=True, use_eo=True, use_feedback=True, single_shot=False),
    # same pipeline as full; only the model behind the backends differs
    "ds-full": dict(use_planner=True, use_eo=True, use_feedback=True, single_shot=False),
}
VARIANTS = tuple(VARIANT_FLAGS)
ROLES = ("planner", "eo", "executor")


@dataclass
class PipelineConfig:
    use_planner: bool = True
    use_eo: bool = True
    use_feedback: bool = True
    single_shot: bool = False
    timeout_factor: float = 2.0
    grasp_failure_prob: float = 0.10
    seed: int = 0
    variant: str = "full"
    # role -> backend; "default" serves any role without its own entry
    backends: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.single_shot and (self.use_planner or self.use_eo or self.use_feedback):
            raise ValueError("single-shot mode excludes the planner, EO and feedback modules")
        if self.timeout_factor <= 0:
            raise ValueError("timeout_factor must be positive")
        if not 0.0 <= self.grasp_failure_prob <= 1.0:
            raise ValueError("grasp_failure_prob must be in [0, 1]")

    @classmethod
    def for_variant(cls, variant: str, **kwargs) -> "PipelineConfig":
        try:
            flags = VARIANT_FLAGS[variant]
        except KeyError:
            raise ValueError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}") from None
        return cls(variant=variant, **flags, **kwargs)

    def backend_for(self, role: str):
        backend = self.backends.get(role) or self.backends.get("default")
        if backend is None:
            raise ValueError(f"no backend configured for the {role} module")
        return backend

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "use_planner": self.use_planner,
            "use_eo": self.use_eo,
            "use_feedback": self.use_feedback,
            "single_shot": self.single_shot,
            "timeout_factor": self.timeout_factor,
            "grasp_failure_prob": self.grasp_failure_prob,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Feedback:
    status: str  # "Done" | "Error"
    robot_at: str
    gripper: str
    remaining_plan: tuple[str, ...]
    message: str = ""  # verbatim error text
    context: str = ""  # where the error happened
    current_eo: Optional[str] = None

    @property
    def status_line(self) -> str:
        if self.status == "Done":
            return "Done"
        return f"Error: {self.message}{self.context}"

    @property
    def reminder(self) -> str:
        return f"The robot is at the {self.robot_at}. The gripper holds {self.gripper}."


@dataclass(frozen=True)
class TwinResult:
    accepted: bool
    state: WorldState
    index: Optional[int] = None
    rule: Optional[str] = None
    message: Optional[str] = None

    def to_dict(self) -> dict:
        return {"accepted": self.accepted, "index": self.index, "rule": self.rule, "message": self.message}


@dataclass(frozen=True)
class EnvResult:
    state: WorldState
    results: tuple[dict, ...]
    error: Optional[str] = None
    error_kind: Optional[str] = None  # "stochastic" | "precondition"
    sampled: bool = False  # a random outcome other than plain success was drawn

    def to_dict(self) -> dict:
        return {"results": list(self.results), "error": self.error, "error_kind": self.error_kind}


@dataclass
class Interaction:
    index: int
    step: Optional[str]
    completion: str
    tokens_out: int
    calls: Optional[list[PrimitiveCall]]
    parse_error: Optional[str]
    twin: Optional[dict]
    env: Optional[dict]
    status: str
    feedback: str

    def to_dict(self) -> dict:
        return {
            "type": "interaction",
            "index": self.index,
            "step": self.step,
            "completion": self.completion,
            "tokens_out": self.tokens_out,
            "calls": None if self.calls is None else [c.to_dict() for c in self.calls],
            "parse_error": self.parse_error,
            "twin": self.twin,
            "env": self.env,
            "status": self.status,
            "feedback": self.feedback,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Interaction":
        calls = d.get("calls")
        return cls(
            index=d["index"],
            step=d.get("step"),
            completion=d["completion"],
            tokens_out=d.get("tokens_out", 0),
            calls=None if calls is None else [PrimitiveCall.from_dict(c) for c in calls],
            parse_error=d.get("parse_error"),
            twin=d.get("twin"),
            env=d.get("env"),
            status=d["status"],
            feedback=d.get("feedback", ""),
        )


@dataclass
class EpisodeTranscript:
    task: TaskSpec
    instruction: str
    variant: str
    config: dict
    seed: int
    repetition: int = 0
    task_index: int = 0
    plan: list[str] = field(default_factory=list)
    eos: Optional[dict] = None
    interactions: list[Interaction] = field(default_factory=list)
    exchanges: list[GenerationRecord] = field(default_factory=list)
    outcome: str = ABORTED
    abort_reason: Optional[str] = None
    wall_time: float = 0.0

    @property
    def execution_calls(self) -> int:
        return len(self.interactions)

    def tokens_for(self, roles: Iterable[str]) -> int:
        roles = set(roles)
        return sum(r.tokens_out for r in self.exchanges if r.role in roles)

    @property
    def tokens_out_total(self) -> int:
        """Tokens output by the execution module (the CaP prompt counts as one)."""
        return self.tokens_for(("executor", "cap"))

    @property
    def token_methods(self) -> set[str]:
        return {r.token_method for r in self.exchanges}

    def metrics(self) -> dict:
        return {
            "execution_calls": self.execution_calls,
            "tokens_out_total": self.tokens_out_total,
            "planner_tokens": self.tokens_for(("planner",)),
            "eo_tokens": self.tokens_for(("eo",)),
            "wall_time": round(self.wall_time, 3),
        }

    def to_records(self) -> list[dict]:
        header = {
            "type": "header",
            "task": self.task.to_dict(),
            "instruction": self.instruction,
            "variant": self.variant,
            "config": self.config,
            "seed": self.seed,
            "repetition": self.repetition,
            "task_index": self.task_index,
        }
        lines = [header]
        for rec in self.exchanges:
            d = rec.to_dict()
            d["role_prompt_hash"] = d.pop("prompt_hash")
            lines.append({"type": "exchange", **d})
        lines.extend(i.to_dict() for i in self.interactions)
        lines.append(
            {
                "type": "footer",
                "plan": self.plan,
                "eos": self.eos,
                "outcome": self.outcome,
                "abort_reason": self.abort_reason,
                "metrics": self.metrics(),
            }
        )
        return lines

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in self.to_records())


def transcripts_from_records(records: Iterable[dict]) -> list[EpisodeTranscript]:
    out: list[EpisodeTranscript] = []
    current: Optional[EpisodeTranscript] = None
    for rec in records:
        kind = rec.get("type")
        if kind == "header":
            current = EpisodeTranscript(
                task=TaskSpec.from_dict(rec["task"]),
                instruction=rec["instruction"],
                variant=rec["variant"],
                config=rec.get("config", {}),
                seed=rec["seed"],
                repetition=rec.get("repetition", 0),
                task_index=rec.get("task_index", 0),
            )
            out.append(current)
        elif current is None:
            raise ValueError("transcript record before any header")
        elif kind == "exchange":
            current.exchanges.append(
                GenerationRecord(
                    role=rec["role"],
                    prompt_hash=rec["role_prompt_hash"],
                    prompt_chars=rec["prompt_chars"],
                    completion=rec["completion"],
                    tokens_out=rec["tokens_out"],
                    token_method=rec["token_method"],
                    latency=rec.get("latency", 0.0),
                )
            )
        elif kind == "interaction":
            current.interactions.append(Interaction.from_dict(rec))
        elif kind == "footer":
            current.plan = rec.get("plan", [])
            current.eos = rec.get("eos")
            current.outcome = rec["outcome"]
            current.abort_reason = rec.get("abort_reason")
            current.wall_time = rec.get("metrics", {}).get("wall_time", 0.0)
    return out


def load_transcripts(*paths) -> list[EpisodeTranscript]:
    from .gateway import read_jsonl

    return [t for p in paths for t in transcripts_from_records(read_jsonl(p))]


# twin and environment execution


def run_twin(program: SnippetProgram, state: WorldState, registry: Registry, env: Environment) -> TwinResult:
    """Check every call against preconditions, applying success effects only."""
    for i, call in enumerate(program.calls):
        spec = registry.get(call.name)
        if spec is None:
            return TwinResult(False, state, i, "unknown_primitive", _unknown(call, registry))
        try:
            violation = check_precondition(spec, state, call.args, env)
        except ArgumentError as exc:
            return TwinResult(False, state, i, "argument", str(exc))
        if violation is not None:
            return TwinResult(False, state, i, violation.rule, violation.message)
        state = spec.success_effect(state, call.args)
    return TwinResult(True, state)


def _unknown(call: PrimitiveCall, registry: Registry) -> str:
    return f"unknown function {call.name!r}; available skills are {', '.join(registry)}"


def run_env(
    program: SnippetProgram,
    state: WorldState,
    registry: Registry,
    env: Environment,
    rng: random.Random,
) -> EnvResult:
    """Execute calls in order; stop at the first one that does not succeed."""
    results = []
    sampled = False
    for call in program.calls:
        spec = registry.get(call.name)
        if spec is None:
            msg = _unknown(call, registry)
            results.append({"call": str(call), "status": "violation", "rule": "unknown_primitive", "message": msg})
            return EnvResult(state, tuple(results), msg, "precondition", sampled)
        outcome = execute(spec, state, call.args, rng, env)
        if isinstance(outcome, Success):
            if outcome.args != tuple(call.args):
                sampled = True
            state = outcome.state
            results.append({"call": str(call), "status": "success", "rule": None, "message": None,
                            "realized": list(outcome.args)})
        elif isinstance(outcome, StochasticFailure):
            state = outcome.state
            results.append({"call": str(call), "status": "stochastic", "rule": "stochastic", "message": outcome.message})
            return EnvResult(state, tuple(results), outcome.message, "stochastic", True)
        else:
            assert isinstance(outcome, PreconditionViolation)
            results.append({"call": str(call), "status": "violation", "rule": outcome.rule, "message": outcome.message})
            return EnvResult(state, tuple(results), outcome.message, "precondition", sampled)
    return EnvResult(state, tuple(results), None, None, sampled)


def compose_feedback(
    twin_result: Optional[TwinResult],
    env_result: Optional[EnvResult],
    state: WorldState,
    remaining_plan: Sequence[str],
    eo: Optional[str] = None,
    parse_error: Optional[str] = None,
    program: Optional[SnippetProgram] = None,
) -> Feedback:
    held = state.gripper.describe() if state.gripper else "nothing"
    base = dict(robot_at=state.robot_at, gripper=held, remaining_plan=tuple(remaining_plan), current_eo=eo)
    if parse_error is not None:
        return Feedback("Error", message=parse_error, context=". No code was executed.", **base)
    if twin_result is not None and not twin_result.accepted:
        where = ""
        if program is not None and twin_result.index is not None:
            where = f" (in {program.calls[twin_result.index]})"
        return Feedback("Error", message=twin_result.message, context=f"{where}. Nothing was executed.", **base)
    if env_result is not None and env_result.error is not None:
        if env_result.error_kind == "stochastic":
            return Feedback("Error", message=env_result.error, context=". The step must be attempted again.", **base)
        return Feedback("Error", message=env_result.error, context=" during execution.", **base)
    return Feedback("Done", **base)


# episodes


def _resolve_task(task: Union[TaskSpec, str], env: Environment) -> TaskSpec:
    if isinstance(task, TaskSpec):
        return task
    spec = resolve_instruction(task, env)
    if spec is None:
        raise ValueError(f"cannot derive object, source and target from instruction {task!r}")
    return spec


def run_episode(
    task: Union[TaskSpec, str],
    env: Environment,
    registry: Registry,
    config: PipelineConfig,
    *,
    instruction_index: int = 0,
    seed: Optional[int] = None,
    repetition: int = 0,
    task_index: int = 0,
) -> EpisodeTranscript:
    if config.single_shot:
        return run_cap_episode(
            task, env, registry, config,
            instruction_index=instruction_index, seed=seed, repetition=repetition, task_index=task_index,
        )
    started = time.perf_counter()
    spec = _resolve_task(task, env)
    seed = config.seed if seed is None else seed
    instruction = spec.instructions[instruction_index % len(spec.instructions)]
    state = task_state(spec, env)
    task_env = env.with_initial(state)
    rng = random.Random(seed)
    context = EpisodeContext(task=spec, env=task_env, gtsg=ground_truth_chain(spec))
    tr = EpisodeTranscript(
        task=spec, instruction=instruction, variant=config.variant, config=config.to_dict(),
        seed=seed, repetition=repetition, task_index=task_index,
    )
    sessions: list[ChatSession] = []

    def finish(outcome: str, reason: Optional[str] = None) -> EpisodeTranscript:
        tr.outcome = outcome
        tr.abort_reason = reason
        records = [r for s in sessions for r in s.records]
        tr.exchanges = records
        tr.wall_time = time.perf_counter() - started
        return tr

    try:
        if config.use_planner:
            planner = ChatSession(config.backend_for("planner"), "planner", context)
            sessions.append(planner)
            raw, _ = planner.send(planner_prompt(instruction, task_env))
            try:
                tr.plan = parse_plan(raw)
            except ParseError as exc:
                return finish(ABORTED, f"planner output could not be parsed: {exc}")
        else:
            tr.plan = [instruction]
        if config.use_eo:
            eo_session = ChatSession(config.backend_for("eo"), "eo", context)
            sessions.append(eo_session)
            raw, _ = eo_session.send(eo_prompt(instruction, tr.plan, task_env))
            try:
                tr.eos = parse_eo_map(raw, tr.plan)
            except ParseError as exc:
                logger.info("expected outcomes unusable, continuing without: %s", exc)
                tr.eos = {}
        executor = ChatSession(config.backend_for("executor"), "executor", context)
        sessions.append(executor)
        skills = skill_headers(registry)
        prompt = executor_initial_prompt(instruction, tr.plan, skills, task_env, tr.eos if config.use_eo else None)
        remaining = list(tr.plan)
        max_calls = max(1, math.ceil(config.timeout_factor * len(tr.plan)))
        for k in range(max_calls):
            step = remaining[0] if remaining else None
            completion, record = executor.send(prompt)
            program, parse_error = None, None
            try:
                program = parse_snippet(extract_code(completion))
            except ParseError as exc:
                parse_error = str(exc)
            twin_result = env_result = None
            if config.use_feedback:
                if program is not None:
                    twin_result = run_twin(program, state, registry, task_env)
                    if twin_result.accepted:
                        env_result = run_env(program, state, registry, task_env, rng)
                        state = env_result.state
                        if remaining:
                            remaining.pop(0)
            else:
                if program is not None:
                    env_result = run_env(program, state, registry, task_env, rng)
                    state = env_result.state
                if remaining:
                    remaining.pop(0)
            next_eo = tr.eos.get(remaining[0]) if (config.use_eo and tr.eos and remaining) else None
            fb = compose_feedback(twin_result, env_result, state, remaining, next_eo, parse_error, program)
            if not config.use_feedback:
                fb = replace(fb, status="Done")
            tr.interactions.append(
                Interaction(
                    index=k,
                    step=step,
                    completion=completion,
                    tokens_out=record.tokens_out,
                    calls=None if program is None else list(program.calls),
                    parse_error=parse_error,
                    twin=None if twin_result is None else twin_result.to_dict(),
                    env=None if env_result is None else env_result.to_dict(),
                    status=fb.status,
                    feedback=fb.status_line,
                )
            )
            if goal_satisfied(state, spec.goal):
                return finish(SUCCESS)
            if not config.use_feedback and not remaining:
                return finish(FAILED)
            prompt = executor_followup_prompt(
                fb.status_line,
                remaining,
                reminder=fb.reminder if config.use_feedback else None,
                current_eo=next_eo,
            )
        return finish(TIMEOUT)
    except GatewayError as exc:
        return finish(ABORTED, f"{type(exc).__name__}: {exc}")


def run_cap_episode(
    task: Union[TaskSpec, str],
    env: Environment,
    registry: Registry,
    config: PipelineConfig,
    *,
    instruction_index: int = 0,
    seed: Optional[int] = None,
    repetition: int = 0,
    task_index: int = 0,
) -> EpisodeTranscript:
    """Single prompt, single program, executed open loop."""
    if not config.single_shot:
        raise ValueError("run_cap_episode needs a single-shot configuration")
    started = time.perf_counter()
    spec = _resolve_task(task, env)
    seed = config.seed if seed is None else seed
    instruction = spec.instructions[instruction_index % len(spec.instructions)]
    state = task_state(spec, env)
    task_env = env.with_initial(state)
    rng = random.Random(seed)
    context = EpisodeContext(task=spec, env=task_env, gtsg=ground_truth_chain(spec))
    tr = EpisodeTranscript(
        task=spec, instruction=instruction, variant=config.variant, config=config.to_dict(),
        seed=seed, repetition=repetition, task_index=task_index,
    )
    session = ChatSession(config.backend_for("executor"), "cap", context)
    try:
        completion, record = session.send(cap_prompt(instruction, skill_headers(registry), task_env))
    except GatewayError as exc:
        tr.outcome, tr.abort_reason = ABORTED, f"{type(exc).__name__}: {exc}"
        tr.wall_time = time.perf_counter() - started
        return tr
    tr.exchanges = list(session.records)
    try:
        program = parse_snippet(extract_code(completion))
    except ParseError as exc:
        tr.interactions.append(
            Interaction(0, None, completion, record.tokens_out, None, str(exc), None, None, "Error", f"Error: {exc}")
        )
        tr.outcome, tr.abort_reason = ABORTED, f"unparseable program: {exc}"
        tr.wall_time = time.perf_counter() - started
        return tr
    env_result = run_env(program, state, registry, task_env, rng)
    tr.interactions.append(
        Interaction(0, None, completion, record.tokens_out, list(program.calls), None, None,
                    env_result.to_dict(), "Done", "Done")
    )
    tr.outcome = SUCCESS if goal_satisfied(env_result.state, spec.goal) else FAILED
    tr.wall_time = time.perf_counter() - started
    return tr
