"""Layerwise policy covers with inverse gap weighting for tabular contextual MDPs."""
from .cmdp import (ModelError, OccupancyTable, Policy, RewardFunction, TabularCMDP, ValueTable,
                   evaluate_policy, occupancy_of, optimal_values, regret_of)
from .env import RngStream, Trajectory, rollout
from .oracle import MLEOracle, ModelClass, hellinger_sq, mle, oracle_error_budget
from .cover import EpochCovers, EpochParams, PolicyCover, igw_distribution
from .algorithm import (Constants, EpochSchedule, RunRecord, epoch_parameters, run_lolipop,
                        run_reward_free)
from .instances import GenSpec, generate_class, hard_pair, needle_class

__all__ = [
    "ModelError", "OccupancyTable", "Policy", "RewardFunction", "TabularCMDP", "ValueTable",
    "evaluate_policy", "occupancy_of", "optimal_values", "regret_of", "RngStream", "Trajectory",
    "rollout", "MLEOracle", "ModelClass", "hellinger_sq", "mle", "oracle_error_budget",
    "EpochCovers", "EpochParams", "PolicyCover", "igw_distribution", "Constants", "EpochSchedule",
    "RunRecord", "epoch_parameters", "run_lolipop", "run_reward_free", "GenSpec", "generate_class",
    "hard_pair", "needle_class",
]
