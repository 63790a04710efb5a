"""Experiment harness: config, poisoning, metrics, timing, reporting."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .experiment import run_experiment
from .metrics import Metrics, compute_metrics, tar_ratio

__all__ = ["ConfigError", "ExperimentConfig", "Metrics", "compute_metrics", "load_config",
           "parse_config", "run_experiment", "tar_ratio"]
