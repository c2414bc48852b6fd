"""Regenerate the golden fixtures under tests/fixtures.

Runs the 50-task corpus through the rule-based oracle under the Plan and
Full variants (grasp failure probability 0.1) and writes the corpus, the
transcripts and the report built from them.
"""

from __future__ import annotations

import json
from pathlib import Path

from groundplan.bench import build_report, emit_report, write_transcripts, run_corpus
from groundplan.chaincheck import verify_chain
from groundplan.oracle import OracleBackend, OracleConfig
from groundplan.orchestrator import PipelineConfig
from groundplan.primitives import registry_for
from groundplan.taskgen import corpus_hash, corpus_to_json, generate_corpus, ground_truth_chain, industrial_tasks
from groundplan.world import build_service_env

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
CORPUS_SEED = 0
P_FAIL = 0.1
REPS = 3


def main() -> None:
    env = build_service_env()
    corpus = generate_corpus(env, 50, CORPUS_SEED)
    (FIXTURES / "corpus.json").write_text(corpus_to_json(corpus) + "\n", encoding="utf-8")

    registry = registry_for(env, P_FAIL)
    transcripts = []
    for variant, oracle in (
        ("plan", OracleConfig()),
        ("full", OracleConfig(recover_on_feedback=True)),
    ):
        config = PipelineConfig.for_variant(
            variant, grasp_failure_prob=P_FAIL, seed=CORPUS_SEED, backends={"default": OracleBackend(oracle)}
        )
        trs, _ = run_corpus(corpus, env, registry, config, REPS)
        transcripts.extend(trs)
    write_transcripts(FIXTURES / "transcripts.jsonl", transcripts)
    meta = {
        "seed": CORPUS_SEED,
        "p_fail": P_FAIL,
        "timeout_factor": 2.0,
        "corpus_hash": corpus_hash(corpus),
        "repetitions": REPS,
    }
    report = build_report(transcripts, meta)
    (FIXTURES / "report.json").write_text(emit_report(report, "json"), encoding="utf-8")

    chains = [
        {"name": spec.task_id, "env": "service", "initial": None,
         "chain": [c.to_dict() for c in ground_truth_chain(spec)]}
        for spec in corpus
    ]
    chains += [
        {"name": spec.task_id, "env": "taskboard", "chain": [c.to_dict() for c in ground_truth_chain(spec)]}
        for spec in industrial_tasks()
    ]
    # service chains are checked from each task's own initial state
    from groundplan.taskgen import task_state

    for entry, spec in zip(chains, corpus):
        entry["initial"] = task_state(spec, env).to_dict()
    (FIXTURES / "gtsg_chains.json").write_text(json.dumps(chains, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
