from __future__ import annotations

from pathlib import Path

import pytest

from groundplan.oracle import OracleBackend, OracleConfig
from groundplan.orchestrator import PipelineConfig
from groundplan.taskgen import generate_corpus, industrial_tasks
from groundplan.world import build_service_env, build_taskboard_env

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def service_env():
    return build_service_env()


@pytest.fixture
def taskboard_env():
    return build_taskboard_env()


@pytest.fixture(scope="session")
def corpus():
    return generate_corpus(build_service_env(), 50, 0)


@pytest.fixture
def charger_task():
    return industrial_tasks()[0]


def oracle_config(variant: str, p_fail: float = 0.0, seed: int = 0, **oracle) -> PipelineConfig:
    backend = OracleBackend(OracleConfig(**oracle))
    return PipelineConfig.for_variant(variant, grasp_failure_prob=p_fail, seed=seed, backends={"default": backend})


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
