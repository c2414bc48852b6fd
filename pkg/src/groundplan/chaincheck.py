"""Chain verification by state enumeration, and failure classification.

A chain is valid when every success outcome of step i lies in the
initialization set of step i+1. Outcome sets are finite here (grasp
without a part fans out over the object's parts), so the check enumerates
them exactly.
"""

from __future__ import annotations

import csv
import io
import itertools
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .parser import PrimitiveCall
from .primitives import COLORS, ArgumentError, Registry, check_precondition, success_outcomes
from .world import Environment, WorldState

MISSING_SUBGOAL = "MissingSubgoal"
MISCHARACTERIZED = "MischaracterizedSubgoal"
PRIMITIVE_FAILURE = "PrimitiveFailureUnrecovered"
CODE_ERROR = "CodeError"
OTHER = "Other"
LABELS = (MISSING_SUBGOAL, MISCHARACTERIZED, PRIMITIVE_FAILURE, CODE_ERROR, OTHER)

# violations that another primitive call would have prevented
MISSING_CALL_RULES = frozenset({"not_colocated", "not_holding", "not_at_location"})


class UnknownPrimitive(KeyError):
    def __str__(self):
        return f"unknown primitive {self.args[0]!r}"


@dataclass(frozen=True)
class ChainResult:
    ok: bool
    index: Optional[int] = None
    message: Optional[str] = None
    rule: Optional[str] = None
    states_checked: int = 0
    # a state from which the failing step is not afforded
    witness: Optional[WorldState] = None

    def __bool__(self):
        return self.ok

    def to_dict(self) -> dict:
        return {"ok": self.ok, "index": self.index, "message": self.message, "rule": self.rule,
                "states_checked": self.states_checked}


def _arg_choices(spec, env: Environment) -> list[tuple]:
    """All argument tuples accepted by the parameter schema."""
    out: list[tuple] = [()]
    for param in spec.params:
        grown = []
        for prefix in out:
            if param.kind == "location":
                values = list(env.locations)
            elif param.kind == "object":
                values = list(env.object_names)
            elif param.kind == "part":
                obj = next((v for p, v in zip(spec.params, prefix) if p.kind == "object"), None)
                values = list(env.object(obj).parts) if obj else []
            elif param.kind == "color":
                values = list(COLORS)
            else:
                values = []
            if param.optional:
                grown.append(prefix)
            grown.extend(prefix + (v,) for v in values)
        out = grown
    return out


def enumerate_states(
    registry: Registry, env: Environment, initial: Optional[WorldState] = None, limit: int = 200_000
) -> set[WorldState]:
    """Every state reachable from ``initial`` through successful primitive calls."""
    start = initial or env.initial
    seen = {start}
    queue = deque([start])
    calls = [(spec, args) for spec in registry.values() for args in _arg_choices(spec, env)]
    while queue:
        state = queue.popleft()
        for spec, args in calls:
            if check_precondition(spec, state, args, env) is not None:
                continue
            for outcome in success_outcomes(spec, state, args, env):
                if outcome.state not in seen:
                    if len(seen) >= limit:
                        raise RuntimeError(f"state space exceeds {limit} states")
                    seen.add(outcome.state)
                    queue.append(outcome.state)
    return seen


def verify_chain(
    registry: Registry,
    chain: Sequence[PrimitiveCall],
    initial: Optional[WorldState],
    env: Environment,
    scope: str = "chain",
) -> ChainResult:
    """Check the chaining condition along ``chain``.

    ``scope="chain"`` starts from ``initial`` only; ``scope="full"`` starts
    from every reachable state in which the first step is afforded.
    Raises UnknownPrimitive for names missing from the registry.
    """
    for call in chain:
        if call.name not in registry:
            raise UnknownPrimitive(call.name)
    initial = initial or env.initial
    if scope == "chain":
        frontier = {initial}
    elif scope == "full":
        frontier = enumerate_states(registry, env, initial)
        if chain:
            spec = registry[chain[0].name]
            try:
                frontier = {s for s in frontier if check_precondition(spec, s, chain[0].args, env) is None}
            except ArgumentError as exc:
                return ChainResult(False, 0, str(exc), "argument")
            if not frontier:
                return ChainResult(False, 0, f"{chain[0]} is never afforded", "unreachable")
    else:
        raise ValueError(f"unknown scope {scope!r}")
    checked = 0
    for i, call in enumerate(chain):
        spec = registry[call.name]
        nxt: set[WorldState] = set()
        for state in sorted(frontier, key=lambda s: repr(s.to_dict())):
            checked += 1
            try:
                violation = check_precondition(spec, state, call.args, env)
            except ArgumentError as exc:
                return ChainResult(False, i, str(exc), "argument", checked, state)
            if violation is not None:
                return ChainResult(False, i, violation.message, violation.rule, checked, state)
            nxt.update(o.state for o in success_outcomes(spec, state, call.args, env))
        frontier = nxt
    return ChainResult(True, states_checked=checked)


# failure taxonomy


@dataclass(frozen=True)
class FailureLabel:
    label: str
    evidence: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown failure label {self.label!r}")


def _same_target(a: PrimitiveCall, b: PrimitiveCall) -> bool:
    return a.name == b.name and a.args[:1] == b.args[:1]


def _gtsg_index(call: PrimitiveCall, gtsg: Sequence[PrimitiveCall]) -> Optional[int]:
    for j, ref in enumerate(gtsg):
        if ref == call:
            return j
    for j, ref in enumerate(gtsg):
        if _same_target(ref, call):
            return j
    return None


def _violations(interaction) -> list[tuple[PrimitiveCall, str, str]]:
    """(call, rule, message) for every precondition violation of an interaction."""
    out = []
    calls = interaction.calls or []
    twin = interaction.twin
    if twin and not twin.get("accepted") and twin.get("index") is not None:
        out.append((calls[twin["index"]], twin.get("rule"), twin.get("message")))
    env = interaction.env
    if env:
        for k, res in enumerate(env.get("results", [])):
            if res["status"] == "violation" and k < len(calls):
                out.append((calls[k], res.get("rule"), res.get("message")))
    return out


def classify_failure(transcript, gtsg: Optional[Sequence[PrimitiveCall]] = None) -> Optional[FailureLabel]:
    """Label a failed episode; successful episodes get None.

    Rules are tried in order and the first match wins.
    """
    if transcript.outcome == "success":
        return None
    if gtsg is None:
        from .taskgen import ground_truth_chain

        gtsg = ground_truth_chain(transcript.task)
    gtsg = list(gtsg)
    inters = transcript.interactions

    parse_failures = [i for i in inters if i.parse_error is not None]
    if inters and len(parse_failures) * 2 > len(inters):
        first = parse_failures[0]
        return FailureLabel(CODE_ERROR, f"{len(parse_failures)}/{len(inters)} parse errors; interaction {first.index}: {first.parse_error}")

    emitted: list[PrimitiveCall] = []
    for inter in inters:
        emitted.extend(inter.calls or [])
        for call, rule, message in _violations(inter):
            if rule not in MISSING_CALL_RULES:
                continue
            j = _gtsg_index(call, gtsg)
            if j is None or j == 0:
                continue
            fix = gtsg[j - 1]
            if not any(_same_target(fix, c) for c in emitted):
                return FailureLabel(MISSING_SUBGOAL, f"interaction {inter.index}: {rule} ({message}); {fix} never emitted")

    all_violations = [(inter.index, v) for inter in inters for v in _violations(inter)]
    if all(rule == "wrong_part" for _, (_, rule, _) in all_violations):
        for inter in inters:
            for call in inter.calls or []:
                j = _gtsg_index(call, gtsg)
                if j is not None and gtsg[j] != call:
                    return FailureLabel(MISCHARACTERIZED, f"interaction {inter.index}: {call} instead of {gtsg[j]}")

    for pos, inter in enumerate(inters):
        env = inter.env or {}
        for k, res in enumerate(env.get("results", [])):
            if res["status"] != "stochastic":
                continue
            failed = (inter.calls or [])[k]
            later = [c for i in inters[pos + 1:] for c in (i.calls or [])]
            if not any(_same_target(failed, c) for c in later):
                return FailureLabel(PRIMITIVE_FAILURE, f"interaction {inter.index}: {res['message']}; {failed} not retried")

    return FailureLabel(OTHER, transcript.abort_reason or f"outcome {transcript.outcome}")


def labels_csv(transcripts: Iterable, gtsgs: Optional[dict] = None) -> str:
    """CSV with one row per failed episode: task id, repetition, variant, label, evidence."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["task_id", "repetition", "variant", "label", "evidence"])
    for tr in transcripts:
        gtsg = (gtsgs or {}).get(tr.task.task_id)
        label = classify_failure(tr, gtsg)
        if label is not None:
            writer.writerow([tr.task.task_id, tr.repetition, tr.variant, label.label, label.evidence])
    return buf.getvalue()
