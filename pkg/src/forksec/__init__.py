"""Selfish-mining security analysis for proof-of-work chain and DAG protocols.

The package models a single deviating miner against honest (or petty-compliant)
majority mining as a ratio-objective MDP, transforms it to a stochastic
shortest path problem, and solves for the optimal revenue rate. Binary search
over the miner's power locates the security threshold of each protocol
variant. A discrete-event simulator cross-checks the closed-form baselines.
"""

__version__ = "0.1.0"

from .analysis import (
    HonestBaseline,
    ThresholdResult,
    honest_baseline,
    honest_utility,
    optimal_revenue,
    security_threshold,
    whale_inclusion_rate,
)
from .mdp import (
    Mdp,
    ModelError,
    SolveResult,
    SolverConfig,
    SolverError,
    policy_iteration,
    pto_transform,
    ratio_value_oracle,
    value_iteration,
)
from .models import (
    DifficultySource,
    Ledger,
    MODEL_BUILDERS,
    ModelParams,
    TieBreak,
    canonicalize_state,
    rebind_miner_power,
)
from .simulate import SimReport, simulate_honest, simulate_policy
from .sweep import RunConfig, load_run_config, run_sweep, verify_csv

__all__ = [
    "DifficultySource",
    "HonestBaseline",
    "Ledger",
    "MODEL_BUILDERS",
    "Mdp",
    "ModelError",
    "ModelParams",
    "RunConfig",
    "SimReport",
    "SolveResult",
    "SolverConfig",
    "SolverError",
    "ThresholdResult",
    "TieBreak",
    "canonicalize_state",
    "honest_baseline",
    "honest_utility",
    "load_run_config",
    "optimal_revenue",
    "policy_iteration",
    "pto_transform",
    "ratio_value_oracle",
    "rebind_miner_power",
    "run_sweep",
    "security_threshold",
    "simulate_honest",
    "simulate_policy",
    "value_iteration",
    "verify_csv",
    "whale_inclusion_rate",
]
