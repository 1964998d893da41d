"""End-to-end aggregate sorting simulation."""

from .config import SimConfig, load_config, parse_config, streams
from .experiment import GraspModel, run_experiment, run_many, tally_replay, load_replay, parse_replay
from .pipeline import Phase, PipelineState, step_pipeline
from .report import SortReport, render_report, parse_report_csv
from .scene import Scene, AggregateSpec, generate_scene

__all__ = [
    "AggregateSpec",
    "GraspModel",
    "Phase",
    "PipelineState",
    "Scene",
    "SimConfig",
    "SortReport",
    "generate_scene",
    "load_config",
    "load_replay",
    "parse_config",
    "parse_replay",
    "parse_report_csv",
    "render_report",
    "run_experiment",
    "run_many",
    "step_pipeline",
    "streams",
    "tally_replay",
]
