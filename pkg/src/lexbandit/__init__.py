"""Lexicographic multi-objective bandits.

LexElim-Out and LexElim-In arm-elimination algorithms, UCB and uniform
baselines, theoretical bound evaluators and a seeded experiment harness.
"""
from .core import (
    BanditInstance,
    DimensionError,
    GapProfile,
    InfeasibleLambdaError,
    NoiseModel,
    compute_lambda,
    elimination_multipliers,
    gap_matrix,
    lambda_series,
    lex_dominates,
    lex_optimal_arm,
    optimal_set_single,
    optimal_set_sizes,
    optimal_set_top,
    scaled_gap,
)
from .environment import ConfigError, SeedSpec, tripeak_instance, random_instance, sample_reward
from .metrics import BoundReport, RegretTrace, check_coverage, check_pull_ceilings, regret_at
from .policies import LexElimIn, LexElimOut, UcbBaseline, UniformBaseline
from .simulate import PolicySpec, run_to_completion, simulate
from .stats import ConfidenceConfig, StatsTable, confidence_width, most_uncertain_arm

__version__ = "0.1.0"

__all__ = [
    "BanditInstance", "BoundReport", "ConfidenceConfig", "ConfigError", "DimensionError",
    "GapProfile", "InfeasibleLambdaError", "LexElimIn", "LexElimOut", "NoiseModel",
    "PolicySpec", "RegretTrace", "SeedSpec", "StatsTable", "UcbBaseline", "UniformBaseline",
    "check_coverage", "check_pull_ceilings", "compute_lambda", "confidence_width",
    "elimination_multipliers", "gap_matrix", "lambda_series", "lex_dominates",
    "lex_optimal_arm", "most_uncertain_arm", "optimal_set_single", "optimal_set_sizes",
    "optimal_set_top", "tripeak_instance", "random_instance", "regret_at", "run_to_completion",
    "sample_reward", "scaled_gap", "simulate",
]
