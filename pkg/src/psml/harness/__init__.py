from .config import ConfigError, ExperimentConfig, config_to_ini, load_config, parse_config, theta_recipe
from .output import COLUMNS, emit_csv, emit_meta, read_csv, write_csv
from .presets import DESCRIPTIONS, PRESETS, preset, preset_texts
from .runner import (
    ExperimentReport,
    FailureRateExceeded,
    PointTrials,
    ReportRow,
    bench_runtime,
    report_meta,
    run_experiment,
)

__all__ = [
    "COLUMNS",
    "ConfigError",
    "DESCRIPTIONS",
    "ExperimentConfig",
    "ExperimentReport",
    "FailureRateExceeded",
    "PRESETS",
    "PointTrials",
    "ReportRow",
    "bench_runtime",
    "config_to_ini",
    "emit_csv",
    "emit_meta",
    "load_config",
    "parse_config",
    "preset",
    "preset_texts",
    "read_csv",
    "report_meta",
    "run_experiment",
    "theta_recipe",
    "write_csv",
]
