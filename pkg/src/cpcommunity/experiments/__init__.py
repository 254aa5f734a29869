"""Campaign runner, statistics harness and command-line interface."""

from .campaign import (TrialRecord, bridge_attempt_stats, chi_compare, check_summary,
                       read_trials_csv, run_campaign, survival_curve)
from .config import ConfigError, ExperimentConfig, load_config
from .stats import ks_test

__all__ = ["TrialRecord", "bridge_attempt_stats", "chi_compare", "check_summary",
           "read_trials_csv", "run_campaign", "survival_curve", "ConfigError",
           "ExperimentConfig", "load_config", "ks_test"]
