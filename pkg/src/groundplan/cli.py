"""Command-line entry point: ``groundplan <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import bench, chaincheck
from .gateway import GatewayError, HttpBackend, ReplayBackend
from .oracle import FAULTS, OracleBackend, OracleConfig
from .orchestrator import VARIANTS, PipelineConfig, load_transcripts, run_episode
from .parser import PrimitiveCall
from .primitives import registry_for
from .taskgen import (
    corpus_to_json,
    generate_corpus,
    industrial_tasks,
    load_corpus,
    paraphrase_corpus,
)
from .world import Environment, WorldState, build_service_env, build_taskboard_env

log = logging.getLogger("groundplan")

ENVS = {"service": build_service_env, "taskboard": build_taskboard_env}
BACKENDS = ("oracle", "http", "replay")


class UsageError(Exception):
    """Bad invocation or configuration; exit status 2."""


def env_for(name_or_kind: str) -> Environment:
    if name_or_kind in ("industrial", "taskboard"):
        return build_taskboard_env()
    if name_or_kind in ("service", "pick_place"):
        return build_service_env()
    raise UsageError(f"unknown environment {name_or_kind!r}")


def load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return data


def _pick(args, cfg: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg.get(name, default)


def _http_backend(settings: dict) -> HttpBackend:
    known = {"base_url", "model", "api_key", "path", "temperature", "timeout", "max_retries", "backoff", "concurrency"}
    unknown = set(settings) - known
    if unknown:
        raise UsageError(f"unknown HTTP backend setting(s): {', '.join(sorted(unknown))}")
    try:
        return HttpBackend.from_env(**settings)
    except ValueError as exc:
        raise UsageError(f"{exc} (set them in the config file or GROUNDPLAN_BASE_URL / GROUNDPLAN_MODEL)") from None


def build_backends(args, cfg: dict) -> dict:
    kind = _pick(args, cfg, "backend")
    if kind is None:
        raise UsageError("no backend configured; pass --backend or set \"backend\" in the config file")
    if kind not in BACKENDS:
        raise UsageError(f"unknown backend {kind!r}; choose from {', '.join(BACKENDS)}")
    if kind == "oracle":
        faults = getattr(args, "oracle_faults", None)
        faults = faults.split(",") if faults else cfg.get("oracle_faults", [])
        recover = getattr(args, "oracle_recover", False) or cfg.get("oracle_recover", False)
        try:
            oc = OracleConfig(frozenset(f for f in faults if f), recover_on_feedback=recover)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        return {"default": OracleBackend(oc)}
    if kind == "replay":
        paths = getattr(args, "replay_from", None) or cfg.get("replay_from")
        if not paths:
            raise UsageError("the replay backend needs --replay-from TRANSCRIPTS")
        paths = [paths] if isinstance(paths, str) else paths
        for p in paths:
            if not Path(p).exists():
                raise UsageError(f"transcript file not found: {p}")
        return {"default": ReplayBackend.from_file(*paths)}
    http_cfg = dict(cfg.get("http", {}))
    roles = http_cfg.pop("roles", {})
    if getattr(args, "model", None):
        http_cfg["model"] = args.model
    if getattr(args, "base_url", None):
        http_cfg["base_url"] = args.base_url
    backends = {"default": _http_backend(http_cfg)}
    for role, overrides in roles.items():
        backends[role] = _http_backend({**http_cfg, **overrides})
    return backends


def build_config(args, cfg: dict, variant: str, env: Environment) -> PipelineConfig:
    # stochastic grasp failures are a service-robot setting; industrial runs default to none
    default_p = 0.10 if env.kind == "service" else 0.0
    try:
        return PipelineConfig.for_variant(
            variant,
            timeout_factor=float(_pick(args, cfg, "timeout_factor", 2.0)),
            grasp_failure_prob=float(_pick(args, cfg, "p_fail", default_p)),
            seed=int(_pick(args, cfg, "seed", 0)),
            backends=build_backends(args, cfg),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_corpus_arg(path: str):
    try:
        return load_corpus(path)
    except FileNotFoundError:
        raise UsageError(f"corpus file not found: {path}") from None
    except (ValueError, KeyError) as exc:
        raise UsageError(f"cannot read corpus {path}: {exc}") from None


def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# subcommands


def cmd_gen_corpus(args, cfg) -> int:
    env = env_for(args.env)
    corpus = generate_corpus(env, args.n, args.seed)
    if args.paraphrase:
        backends = build_backends(args, cfg)
        corpus = paraphrase_corpus(corpus, backends["default"])
    _write(corpus_to_json(corpus) + "\n", args.out)
    return 0


def _task_from_args(args):
    if args.instruction:
        return args.instruction, env_for(args.env)
    if args.task_id is None:
        raise UsageError("run-task needs --instruction or --task-id")
    tasks = _load_corpus_arg(args.corpus) if args.corpus else industrial_tasks()
    for spec in tasks:
        if spec.task_id == args.task_id:
            return spec, env_for(spec.kind)
    raise UsageError(f"no task with id {args.task_id!r}")


def cmd_run_task(args, cfg) -> int:
    task, env = _task_from_args(args)
    config = build_config(args, cfg, args.variant, env)
    registry = registry_for(env, config.grasp_failure_prob)
    try:
        tr = run_episode(task, env, registry, config, instruction_index=args.instruction_index)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.out:
        bench.write_transcripts(args.out, [tr])
    print(f"{tr.task.task_id}: {tr.outcome} after {tr.execution_calls} execution call(s)"
          + (f" ({tr.abort_reason})" if tr.abort_reason else ""))
    return 0


def cmd_run_corpus(args, cfg) -> int:
    if args.industrial:
        corpus, env = industrial_tasks(), build_taskboard_env()
    else:
        if not args.corpus:
            raise UsageError("run-corpus needs --corpus FILE or --industrial")
        corpus = _load_corpus_arg(args.corpus)
        env = env_for(corpus[0].kind if corpus else "service")
    config = build_config(args, cfg, args.variant, env)
    registry = registry_for(env, config.grasp_failure_prob)
    workers = int(_pick(args, cfg, "concurrency", 4))
    backend = _pick(args, cfg, "backend")
    _, report = bench.run_corpus(
        corpus, env, registry, config, args.reps,
        workers=workers, transcripts_path=args.transcripts, metadata={"backend": backend},
    )
    _write(bench.emit_report(report, args.format), args.report)
    return 0


def cmd_replay(args, cfg) -> int:
    try:
        transcripts = load_transcripts(*args.transcripts)
    except FileNotFoundError as exc:
        raise UsageError(f"transcript file not found: {exc.filename}") from None
    backend = ReplayBackend.from_file(*args.transcripts)
    replayed = []
    for tr in transcripts:
        c = tr.config
        config = PipelineConfig.for_variant(
            tr.variant,
            timeout_factor=c.get("timeout_factor", 2.0),
            grasp_failure_prob=c.get("grasp_failure_prob", 0.10),
            seed=c.get("seed", 0),
            backends={"default": backend},
        )
        env = env_for(tr.task.kind)
        registry = registry_for(env, config.grasp_failure_prob)
        replayed.append(
            run_episode(tr.task, env, registry, config,
                        instruction_index=tr.task.instructions.index(tr.instruction),
                        seed=tr.seed, repetition=tr.repetition, task_index=tr.task_index)
        )
    mismatches = [
        (a.task.task_id, a.repetition)
        for a, b in zip(transcripts, replayed)
        if (a.outcome, a.execution_calls, a.tokens_out_total) != (b.outcome, b.execution_calls, b.tokens_out_total)
    ]
    if args.out:
        bench.write_transcripts(args.out, replayed)
    meta = {}
    if args.metadata_from:
        meta = json.loads(Path(args.metadata_from).read_text(encoding="utf-8")).get("metadata", {})
    report = bench.build_report(replayed, meta)
    _write(bench.emit_report(report, args.format), args.report)
    if mismatches:
        print(f"replay diverged from the recording for {len(mismatches)} episode(s): {mismatches[:5]}", file=sys.stderr)
        return 1
    return 0


def cmd_classify(args, cfg) -> int:
    try:
        transcripts = load_transcripts(*args.transcripts)
    except FileNotFoundError as exc:
        raise UsageError(f"transcript file not found: {exc.filename}") from None
    gtsgs = None
    if args.corpus:
        from .taskgen import ground_truth_chain

        gtsgs = {t.task_id: ground_truth_chain(t) for t in _load_corpus_arg(args.corpus)}
    _write(chaincheck.labels_csv(transcripts, gtsgs), args.out)
    return 0


def _chain_entries(data) -> list[dict]:
    if isinstance(data, dict):
        return [data]
    if isinstance(data, list) and data and isinstance(data[0], dict) and "chain" in data[0]:
        return data
    raise UsageError("chain file must hold an object with a \"chain\" list, or a list of such objects")


def cmd_verify_chain(args, cfg) -> int:
    try:
        data = json.loads(Path(args.chain_file).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"chain file not found: {args.chain_file}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"chain file is not valid JSON: {exc}") from None
    status = 0
    for k, entry in enumerate(_chain_entries(data)):
        env_spec = entry.get("env", "service")
        env = Environment.from_dict(env_spec) if isinstance(env_spec, dict) else env_for(env_spec)
        initial = WorldState.from_dict(entry["initial"]) if entry.get("initial") else env.initial
        chain = [PrimitiveCall.from_dict(c) for c in entry["chain"]]
        registry = registry_for(env)
        label = entry.get("name", f"chain {k}")
        try:
            result = chaincheck.verify_chain(registry, chain, initial, env, scope=args.scope)
        except chaincheck.UnknownPrimitive as exc:
            print(f"{label}: error: {exc}", file=sys.stderr)
            status = max(status, 1)
            continue
        if result.ok:
            print(f"{label}: ok ({result.states_checked} states checked)")
        else:
            print(f"{label}: violation at index {result.index}: {result.message}")
            status = max(status, 1)
    return status


def cmd_report(args, cfg) -> int:
    try:
        transcripts = load_transcripts(*args.transcripts)
    except FileNotFoundError as exc:
        raise UsageError(f"transcript file not found: {exc.filename}") from None
    _write(bench.emit_report(bench.build_report(transcripts), args.format), args.out)
    return 0


def _backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--model")
    p.add_argument("--base-url")
    p.add_argument("--replay-from", nargs="+", metavar="TRANSCRIPTS")
    p.add_argument("--oracle-faults", help=f"comma-separated subset of: {', '.join(sorted(FAULTS))}")
    p.add_argument("--oracle-recover", action="store_true", default=None)


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", choices=VARIANTS, default="full")
    p.add_argument("--p-fail", type=float, dest="p_fail")
    p.add_argument("--timeout-factor", type=float, dest="timeout_factor")
    p.add_argument("--seed", type=int)
    _backend_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groundplan", description="Plan, check and execute robot tasks with language models.")
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a pick-and-place task corpus")
    p.add_argument("--env", default="service", choices=["service"])
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--paraphrase", action="store_true", help="reword instruction variants 2 and 3 with the backend")
    _backend_flags(p)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("run-task", help="run one episode")
    p.add_argument("--instruction")
    p.add_argument("--task-id")
    p.add_argument("--corpus")
    p.add_argument("--env", default="service", choices=sorted(ENVS))
    p.add_argument("--instruction-index", type=int, default=0)
    p.add_argument("--out", help="write the transcript here")
    _run_flags(p)
    p.set_defaults(func=cmd_run_task)

    p = sub.add_parser("run-corpus", help="run a corpus under one variant and report metrics")
    p.add_argument("--corpus")
    p.add_argument("--industrial", action="store_true", help="run the industrial tasks instead of a corpus")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--concurrency", type=int)
    p.add_argument("--transcripts", help="write episode transcripts here")
    p.add_argument("--report", help="write the report here instead of stdout")
    p.add_argument("--format", choices=["json", "markdown"], default="json")
    _run_flags(p)
    p.set_defaults(func=cmd_run_corpus)

    p = sub.add_parser("replay", help="re-run recorded episodes from their transcripts")
    p.add_argument("transcripts", nargs="+")
    p.add_argument("--out", help="write the replayed transcripts here")
    p.add_argument("--report")
    p.add_argument("--metadata-from", help="copy report metadata from this JSON report")
    p.add_argument("--format", choices=["json", "markdown"], default="json")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("classify", help="label failed episodes")
    p.add_argument("transcripts", nargs="+")
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("verify-chain", help="check the chaining condition of primitive chains")
    p.add_argument("chain_file")
    p.add_argument("--scope", choices=["chain", "full"], default="chain")
    p.set_defaults(func=cmd_verify_chain)

    p = sub.add_parser("report", help="aggregate transcripts into a metrics report")
    p.add_argument("transcripts", nargs="+")
    p.add_argument("--format", choices=["json", "markdown"], default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"groundplan {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except GatewayError as exc:
        print(f"groundplan {args.command}: backend error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
