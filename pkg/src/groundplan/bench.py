"""Corpus runs over ablation variants and the aggregated metrics table."""

from __future__ import annotations

import hashlib
import json
import logging
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .gateway import ReplayBackend
from .orchestrator import ABORTED, SUCCESS, VARIANTS, EpisodeTranscript, PipelineConfig, run_episode
from .primitives import Registry
from .taskgen import TaskSpec, corpus_hash
from .world import Environment

logger = logging.getLogger(__name__)

METRICS = ("success_rate", "exec_calls", "tokens")
PRECISION = 4


def episode_seed(corpus_seed: int, task_index: int, repetition: int) -> int:
    digest = hashlib.sha256(f"{corpus_seed}:{task_index}:{repetition}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class VariantRow:
    variant: str
    episodes: int
    repetitions: int
    success_rate_mean: float
    success_rate_std: float
    exec_calls_mean: float
    exec_calls_std: float
    tokens_mean: float
    tokens_std: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class BenchReport:
    rows: list[VariantRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def row(self, variant: str) -> VariantRow:
        for r in self.rows:
            if r.variant == variant:
                return r
        raise KeyError(variant)

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows], "metadata": self.metadata}

    @classmethod
    def from_dict(cls, data: dict) -> "BenchReport":
        return cls([VariantRow(**r) for r in data.get("rows", [])], dict(data.get("metadata", {})))


def _round(x: float) -> float:
    return round(float(x), PRECISION) + 0.0


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return 0.0, 0.0
    # population std over repetition-level aggregates
    return _round(statistics.fmean(values)), _round(statistics.pstdev(values))


def _variant_order(name: str):
    return (VARIANTS.index(name), name) if name in VARIANTS else (len(VARIANTS), name)


def build_report(transcripts: Sequence[EpisodeTranscript], metadata: Optional[dict] = None) -> BenchReport:
    by_variant: dict[str, dict[int, list[EpisodeTranscript]]] = {}
    for tr in transcripts:
        by_variant.setdefault(tr.variant, {}).setdefault(tr.repetition, []).append(tr)
    rows = []
    for variant in sorted(by_variant, key=_variant_order):
        reps = by_variant[variant]
        success, calls, tokens = [], [], []
        for rep in sorted(reps):
            eps = reps[rep]
            success.append(100.0 * sum(t.outcome == SUCCESS for t in eps) / len(eps))
            calls.append(sum(t.execution_calls for t in eps) / len(eps))
            tokens.append(sum(t.tokens_out_total for t in eps) / len(eps))
        sm, ss = _mean_std(success)
        cm, cs = _mean_std(calls)
        tm, ts = _mean_std(tokens)
        rows.append(
            VariantRow(variant, sum(len(e) for e in reps.values()), len(reps), sm, ss, cm, cs, tm, ts)
        )
    meta = dict(metadata or {})
    meta.update(
        {
            "episodes": len(transcripts),
            "aborted": sum(t.outcome == ABORTED for t in transcripts),
            "token_methods": sorted({m for t in transcripts for m in t.token_methods}),
            "executor_tokens_total": sum(t.tokens_out_total for t in transcripts),
            "planner_tokens_total": sum(t.tokens_for(("planner",)) for t in transcripts),
            "eo_tokens_total": sum(t.tokens_for(("eo",)) for t in transcripts),
        }
    )
    return BenchReport(rows, meta)


def emit_report(report: BenchReport, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    if fmt == "markdown":
        lines = [
            "| Architecture | Success rate | Execution calls | Tokens output |",
            "| --- | --- | --- | --- |",
        ]
        for r in report.rows:
            lines.append(
                f"| {r.variant} | {r.success_rate_mean:.2f} ± {r.success_rate_std:.2f}"
                f" | {r.exec_calls_mean:.2f} ± {r.exec_calls_std:.2f}"
                f" | {r.tokens_mean:.2f} ± {r.tokens_std:.2f} |"
            )
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def write_transcripts(path: Union[str, Path], transcripts: Sequence[EpisodeTranscript]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tr in transcripts:
            fh.write(tr.to_jsonl())


def _is_replay(config: PipelineConfig) -> bool:
    return any(isinstance(b, ReplayBackend) for b in config.backends.values())


def run_corpus(
    corpus: Sequence[TaskSpec],
    env: Environment,
    registry: Registry,
    config: PipelineConfig,
    repetitions: int = 3,
    *,
    workers: int = 4,
    transcripts_path: Optional[Union[str, Path]] = None,
    metadata: Optional[dict] = None,
) -> tuple[list[EpisodeTranscript], BenchReport]:
    """Run every task ``repetitions`` times; repetition k uses instruction variant k."""
    if not corpus:
        raise ValueError("the corpus is empty")
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    jobs = [(rep, i, spec) for rep in range(repetitions) for i, spec in enumerate(corpus)]

    def one(job):
        rep, i, spec = job
        return run_episode(
            spec, env, registry, config,
            instruction_index=rep, seed=episode_seed(config.seed, i, rep), repetition=rep, task_index=i,
        )

    # replayed completions are consumed in file order, so replay runs sequentially
    if workers <= 1 or _is_replay(config):
        transcripts = [one(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            transcripts = list(pool.map(one, jobs))
    if transcripts_path is not None:
        write_transcripts(transcripts_path, transcripts)
    meta = {
        "seed": config.seed,
        "p_fail": config.grasp_failure_prob,
        "timeout_factor": config.timeout_factor,
        "corpus_hash": corpus_hash(corpus),
        "repetitions": repetitions,
    }
    meta.update(metadata or {})
    report = build_report(transcripts, meta)
    aborted = report.metadata["aborted"]
    if aborted:
        logger.warning("%d episode(s) aborted and counted as failures", aborted)
    return transcripts, report
