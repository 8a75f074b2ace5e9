"""Sum-rate maximization for a rate-splitting downlink with movable
transmit antennas: channel model, FP surrogate machinery, a dense convex
subproblem solver, the two-stage position search, and a Monte Carlo
experiment harness."""

from .channel import (AntennaLayout, ChannelScenario, SystemParams, dbm_to_watts,
                      derive_seed, generate_scenario)
from .driver import OptimizerConfig, SolveResult, run
from .experiment import (ExperimentConfig, load_config, run_experiment,
                         summarize)
from .metrics import Beamformer, RateAllocation, achieved_sum_rate, check_feasibility

__all__ = [
    "AntennaLayout", "Beamformer", "ChannelScenario", "ExperimentConfig",
    "OptimizerConfig", "RateAllocation", "SolveResult", "SystemParams",
    "achieved_sum_rate", "check_feasibility", "dbm_to_watts", "derive_seed",
    "generate_scenario", "load_config", "run", "run_experiment", "summarize",
]

__version__ = "0.1.0"
