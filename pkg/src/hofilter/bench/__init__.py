"""Experiment harness: configs, runners and the command-line entry point."""

from .config import ExperimentConfig
from .experiments import (ConvergenceReport, IBPReport, RobustnessReport, run, run_convergence,
                          run_filter, run_ibp_check, run_robustness, run_simulate)

__all__ = ["ExperimentConfig", "ConvergenceReport", "IBPReport", "RobustnessReport", "run",
           "run_convergence", "run_filter", "run_ibp_check", "run_robustness", "run_simulate"]
