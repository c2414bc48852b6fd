"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line; the lines are printed in the pytest
terminal summary (see conftest.py) and when this file is run directly.
"""

from __future__ import annotations

import json
import math
import os
import random
import string
import time

import pytest

from conftest import FIXTURES, oracle_config
from groundplan.bench import build_report, emit_report, run_corpus
from groundplan.chaincheck import (
    CODE_ERROR,
    MISCHARACTERIZED,
    MISSING_SUBGOAL,
    classify_failure,
    verify_chain,
)
from groundplan.gateway import Completion, HttpBackend, ReplayBackend
from groundplan.orchestrator import SUCCESS, TIMEOUT, PipelineConfig, run_episode
from groundplan.parser import (
    ParseError,
    PrimitiveCall,
    SnippetProgram,
    extract_code,
    format_program,
    parse_eo_map,
    parse_plan,
    parse_snippet,
)
from groundplan.primitives import industrial_registry, registry_for
from groundplan.taskgen import generate_corpus, ground_truth_chain, industrial_tasks, load_corpus, task_state
from groundplan.world import build_service_env, build_taskboard_env

RESULTS: list[str] = []


def record(name: str, ok: bool, detail: str) -> None:
    RESULTS.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, detail


def _corpus():
    return generate_corpus(build_service_env(), 50, 0)


def test_oracle_soundness():
    env = build_service_env()
    start = time.perf_counter()
    _, report = run_corpus(_corpus(), env, registry_for(env, 0.0), oracle_config("full"), 3)
    elapsed = time.perf_counter() - start
    row = report.row("full")
    ok = row.success_rate_mean == 100.0 and row.exec_calls_mean == 4.0 and row.exec_calls_std == 0.0 and elapsed < 10
    record(
        "oracle soundness",
        ok,
        f"success {row.success_rate_mean:.2f}%, exec calls {row.exec_calls_mean:.2f} ± {row.exec_calls_std:.2f}, {elapsed:.2f} s",
    )


def test_grasp_failure_statistics():
    env = build_service_env()
    reg = registry_for(env, 0.1)
    plan_tr, _ = run_corpus(_corpus(), env, reg, oracle_config("plan", 0.1), 3)
    full_tr, _ = run_corpus(_corpus(), env, reg, oracle_config("full", 0.1, recover_on_feedback=True), 3)
    n = len(plan_tr)
    rate = sum(t.outcome == SUCCESS for t in plan_tr) / n
    sigma = math.sqrt(0.9 * 0.1 / n)
    full_rate = sum(t.outcome == SUCCESS for t in full_tr) / len(full_tr)
    ok = n == 150 and abs(rate - 0.9) <= 3 * sigma and full_rate == 1.0
    record(
        "grasp-failure statistics",
        ok,
        f"Plan {rate:.4f} (90% ± {3 * sigma:.4f}, n={n}); Full with recovery {full_rate:.4f}",
    )


def _charger_rate(variant, faults, n=1000):
    env = build_taskboard_env()
    reg = registry_for(env, 0.0)
    task = industrial_tasks()[0]
    config = oracle_config(variant, faults=frozenset(faults))
    return sum(run_episode(task, env, reg, config, seed=s).outcome == SUCCESS for s in range(n)) / n


def test_part_grasp_mirror():
    omitted = _charger_rate("fb", {"omit_grasp_part"})
    corrected = _charger_rate("full", {"omit_grasp_part"})
    specified = _charger_rate("fb", set())
    ok = abs(omitted - 0.5) <= 0.05 and corrected == 1.0 and specified == 1.0
    record(
        "part-grasp mirror",
        ok,
        f"part omitted {omitted:.3f} (0.50 ± 0.05); EO names part {corrected:.3f}; part given {specified:.3f}",
    )


class AlwaysUnparseable:
    name = "unparseable"

    def complete(self, messages, role, context):
        if role == "planner":
            return Completion("('Move to the Desk', 'Grasp the Fork', 'Move to the Table', 'Put down the Fork')")
        if role == "eo":
            return Completion("{}")
        return Completion("I am not sure how to write this.")


def test_timeout_exactness():
    env = build_service_env()
    spec = _corpus()[0]
    config = PipelineConfig.for_variant("full", backends={"default": AlwaysUnparseable()})
    tr = run_episode(spec, env, registry_for(env, 0.0), config)
    ok = tr.outcome == TIMEOUT and tr.execution_calls == 8 and len(tr.plan) == 4
    record("timeout exactness", ok, f"outcome {tr.outcome} after {tr.execution_calls} interactions, plan length {len(tr.plan)}")


def test_chaining_theorems():
    env = build_service_env()
    reg = registry_for(env, 0.1)
    corpus = _corpus()
    passed = sum(verify_chain(reg, ground_truth_chain(s), task_state(s, env), env).ok for s in corpus)
    board = build_taskboard_env()
    ireg = industrial_registry()
    board_task = industrial_tasks()[2]
    board_ok = verify_chain(ireg, ground_truth_chain(board_task), None, board).ok
    bad = verify_chain(ireg, [PrimitiveCall("grasp", ("charger",)), PrimitiveCall("plug_in", ("charger", "outlet"))], None, board)
    good = verify_chain(ireg, [PrimitiveCall("grasp", ("charger", "plug")), PrimitiveCall("plug_in", ("charger", "outlet"))], None, board)
    ok = passed == 50 and board_ok and not bad.ok and bad.index == 1 and good.ok
    record(
        "chaining theorems",
        ok,
        f"{passed}/50 service chains ok, task board {'ok' if board_ok else 'violated'}, "
        f"part-less charger chain fails at index {bad.index} ({bad.message}), with part {'ok' if good.ok else 'violated'}",
    )


def _labels(fault, variant, task_iter, n=30):
    hits = total = 0
    for spec, env, seed in task_iter:
        config = oracle_config(variant, faults=frozenset({fault}), seed=seed)
        tr = run_episode(spec, env, registry_for(env, 0.0), config, seed=seed)
        if tr.outcome == SUCCESS:
            continue
        total += 1
        hits += classify_failure(tr, ground_truth_chain(spec)).label == EXPECTED[fault]
        if total == n:
            break
    return hits, total


EXPECTED = {
    "omit_move_before_grasp": MISSING_SUBGOAL,
    "omit_grasp_part": MISCHARACTERIZED,
    "emit_unparseable_once": CODE_ERROR,
}


def test_failure_taxonomy_round_trip():
    service = build_service_env()
    board = build_taskboard_env()
    corpus = _corpus()
    charger = industrial_tasks()[0]
    runs = {
        "omit_move_before_grasp": _labels("omit_move_before_grasp", "plan", ((corpus[i % 50], service, i) for i in range(1000))),
        "omit_grasp_part": _labels("omit_grasp_part", "fb", ((charger, board, i) for i in range(1000))),
        "emit_unparseable_once": _labels("emit_unparseable_once", "cap", ((corpus[i % 50], service, i) for i in range(1000))),
    }
    ok = all(h == t == 30 for h, t in runs.values())
    detail = "; ".join(f"{EXPECTED[f]} {h}/{t}" for f, (h, t) in runs.items())
    record("failure-taxonomy round trip", ok, detail)


def test_replay_determinism():
    corpus = load_corpus(FIXTURES / "corpus.json")
    golden_text = (FIXTURES / "report.json").read_text()
    meta = {k: json.loads(golden_text)["metadata"][k] for k in ("seed", "p_fail", "timeout_factor", "corpus_hash", "repetitions")}
    backend = ReplayBackend.from_file(FIXTURES / "transcripts.jsonl")
    env = build_service_env()
    transcripts = []
    for variant in ("plan", "full"):
        config = PipelineConfig.for_variant(variant, grasp_failure_prob=meta["p_fail"], seed=meta["seed"], backends={"default": backend})
        transcripts.extend(run_corpus(corpus, env, registry_for(env, meta["p_fail"]), config, meta["repetitions"])[0])
    text = emit_report(build_report(transcripts, meta), "json")
    tokens = json.loads(text)["metadata"]["executor_tokens_total"]
    record("replay determinism", text == golden_text, f"{len(transcripts)} episodes replayed, executor tokens {tokens}, byte-identical={text == golden_text}")


def _random_program(rng: random.Random) -> SnippetProgram:
    names = ["move_to", "grasp", "put_down", "press_button", "plug_in", "place_in_rack", "open_trapdoor"]
    alphabet = string.ascii_letters + string.digits + " '\"\\\n\t_-.,()#:"
    calls = []
    for _ in range(rng.randint(1, 6)):
        args = tuple("".join(rng.choice(alphabet) for _ in range(rng.randint(0, 10))) for _ in range(rng.randint(0, 3)))
        calls.append(PrimitiveCall(rng.choice(names), args))
    return SnippetProgram(tuple(calls))


def test_parser_properties():
    rng = random.Random(2024)
    round_trips = sum(parse_snippet(format_program(p)) == p for p in (_random_program(rng) for _ in range(1000)))
    crashes = 0
    pieces = ["def do():", "\n", "    ", "move_to(", "'Desk'", ")", "\"", "for x in y:", "if a:", "x = 1", "<code>", "</code>", "(", "[", "{", "'a': 'b'", ",", "\\", "#"]
    for _ in range(1000):
        text = "".join(rng.choice(pieces) if rng.random() < 0.7 else rng.choice(string.printable) for _ in range(rng.randint(0, 40)))
        for fn in (extract_code, parse_snippet, parse_plan, parse_eo_map):
            try:
                fn(text)
            except ParseError:
                pass
            except Exception:
                crashes += 1
    record("parser properties", round_trips == 1000 and crashes == 0, f"{round_trips}/1000 round trips, {crashes} untyped failures in 4000 fuzz parses")


def test_live_directional_check():
    if not os.environ.get("GROUNDPLAN_LIVE"):
        RESULTS.append("[SKIP] live directional check: not CI-gated; set GROUNDPLAN_LIVE=1 with GROUNDPLAN_BASE_URL and GROUNDPLAN_MODEL")
        pytest.skip("needs a live model endpoint")
    env = build_service_env()
    backend = HttpBackend.from_env()
    rates = {}
    for variant in ("plan", "fb", "full"):
        config = PipelineConfig.for_variant(variant, backends={"default": backend})
        _, report = run_corpus(_corpus(), env, registry_for(env, 0.1), config, 1)
        rates[variant] = report.row(variant).success_rate_mean
    ok = rates["full"] > rates["plan"] and rates["full"] > rates["fb"]
    record("live directional check", ok, ", ".join(f"{k} {v:.2f}%" for k, v in rates.items()))


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
