"""Toy environments with exact oracles and offline dataset generation."""

from .blindmatch import (
    BlindMatchEnv,
    BlindMatchSpec,
    behavior_policy_act,
    board_observation,
    exact_value,
    legal_moves,
    opponent_distribution,
    winner,
)
from .dataset import BehaviorConfig, generate_dataset, make_env
from .goalgrid import GoalGridEnv, GoalGridSpec, goal_seeking_act, grid_observation

__all__ = [
    "BehaviorConfig",
    "BlindMatchEnv",
    "BlindMatchSpec",
    "GoalGridEnv",
    "GoalGridSpec",
    "behavior_policy_act",
    "board_observation",
    "exact_value",
    "generate_dataset",
    "goal_seeking_act",
    "grid_observation",
    "legal_moves",
    "make_env",
    "opponent_distribution",
    "winner",
]
