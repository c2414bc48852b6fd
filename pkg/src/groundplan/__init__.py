"""Grounded LLM task planning and execution for robot primitives."""

from .orchestrator import PipelineConfig, run_episode
from .taskgen import TaskSpec, generate_corpus
from .world import Environment, WorldState, build_service_env, build_taskboard_env

__version__ = "0.1.0"

__all__ = [
    "Environment",
    "PipelineConfig",
    "TaskSpec",
    "WorldState",
    "build_service_env",
    "build_taskboard_env",
    "generate_corpus",
    "run_episode",
]
