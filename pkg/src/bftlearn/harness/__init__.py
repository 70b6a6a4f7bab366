"""Experiment configuration, execution and trace emission."""

from .config import AnalysisOptions, ConfigError, ExperimentConfig, config_from_dict, load_config
from .runner import ExperimentError, Trace, TrialResult, analyse_trial, run_experiment, run_trial
from .traceio import read_beliefs, write_trace

__all__ = [
    "AnalysisOptions",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentError",
    "Trace",
    "TrialResult",
    "analyse_trial",
    "config_from_dict",
    "load_config",
    "read_beliefs",
    "run_experiment",
    "run_trial",
    "write_trace",
]
