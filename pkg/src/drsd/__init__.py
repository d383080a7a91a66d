"""Stochastic decomposition for two-stage distributionally robust linear programs.

The main entry points are :func:`run_drsd` (sequential sampling, two
subproblem solves per iteration) and :func:`run_drls` (fixed-sample DR
L-shaped benchmark). Instances are JSON files, see :func:`load_instance`.
"""
from .algorithms import DRLSParams, DRSDParams, RunReport, run_drls, run_drsd
from .ambiguity import AmbiguityConfig, Sample, separate
from .harness import ExperimentConfig, brute_force_dro, replicate
from .lp import LpProblem, LpSettings, solve_lp
from .model import InstanceError, ProblemInstance, load_instance, parse_instance
from .recourse import RecourseError, solve_subproblem

__all__ = [
    "AmbiguityConfig", "DRLSParams", "DRSDParams", "ExperimentConfig", "InstanceError", "LpProblem",
    "LpSettings", "ProblemInstance", "RecourseError", "RunReport", "Sample", "brute_force_dro",
    "load_instance", "parse_instance", "replicate", "run_drls", "run_drsd", "separate",
    "solve_lp", "solve_subproblem",
]

__version__ = "0.1.0"
