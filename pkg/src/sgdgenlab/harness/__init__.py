"""Monte Carlo experiment harness: configs, sweeps over p, CSV/SVG output."""
from .builders import build_model, build_sgd_config, initial_point
from .config import ConfigError, ExperimentConfig, apply_override, load_config, resolve_seed, resolve_workers
from .experiment import (
    CHUNK,
    AggregateRow,
    ReplicationOutcome,
    aggregate,
    figure1,
    figure1_configs,
    figure2,
    figure2_configs,
    replication_seed,
    run_experiment,
    run_panels,
)
from .output import CSV_HEADER, OutputError, emit_outputs, error_bar_svg, write_csv

__all__ = [
    "AggregateRow",
    "CHUNK",
    "CSV_HEADER",
    "ConfigError",
    "ExperimentConfig",
    "OutputError",
    "ReplicationOutcome",
    "aggregate",
    "apply_override",
    "build_model",
    "build_sgd_config",
    "emit_outputs",
    "error_bar_svg",
    "figure1",
    "figure1_configs",
    "figure2",
    "figure2_configs",
    "initial_point",
    "load_config",
    "replication_seed",
    "resolve_seed",
    "resolve_workers",
    "run_experiment",
    "run_panels",
    "write_csv",
]
