"""Offline dataset generation: behavior policies rolled out to trajectory files."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np

from ..errors import ContractError
from ..numerics import derive_seeds, make_rng
from ..trajectory import Trajectory
from .blindmatch import BlindMatchEnv, BlindMatchSpec, behavior_policy_act
from .goalgrid import GoalGridEnv, GoalGridSpec, goal_seeking_act

EnvSpec = Union[BlindMatchSpec, GoalGridSpec]


@dataclass(frozen=True)
class BehaviorConfig:
    """Per-episode skill level drawn uniformly from ``skill_levels``.

    Skill is the probability of playing an oracle-preferred move; the
    spread mimics logged play from a range of player strengths.
    """

    skill_levels: Tuple[float, ...] = (0.0, 0.5, 0.9)

    def __post_init__(self):
        if not self.skill_levels:
            raise ContractError("need at least one skill level")
        if any(not 0.0 <= q <= 1.0 for q in self.skill_levels):
            raise ContractError("skill levels must be probabilities")


def make_env(spec: EnvSpec):
    if isinstance(spec, BlindMatchSpec):
        return BlindMatchEnv(spec)
    if isinstance(spec, GoalGridSpec):
        return GoalGridEnv(spec)
    raise ContractError(f"unknown environment spec {type(spec).__name__}")


def _play_episode(spec: EnvSpec, behavior: BehaviorConfig, episode_id: int,
                  seed: int) -> Trajectory:
    env = make_env(spec)
    rng = make_rng(seed)
    skill = float(behavior.skill_levels[rng.integers(0, len(behavior.skill_levels))])
    agent_starts = episode_id % 2 == 0
    obs = env.reset(rng, agent_starts=agent_starts)
    observations = [obs]
    actions: List[int] = []
    rewards: List[float] = []
    while True:
        if isinstance(spec, BlindMatchSpec):
            action = behavior_policy_act(spec, env.board, skill, rng)
        else:
            action = goal_seeking_act(spec, env.agent, env.goal, skill, rng)
        step = env.step(action)
        observations.append(step.observation)
        actions.append(action)
        rewards.append(step.reward)
        if step.done:
            break
    return Trajectory(episode_id, np.stack(observations), actions, rewards)


def generate_dataset(
    spec: EnvSpec, behavior: BehaviorConfig, n_episodes: int, seed: int
) -> List[Trajectory]:
    """Reproducible episodes: each gets an independent derived seed."""
    if n_episodes < 1:
        raise ContractError("n_episodes must be at least 1")
    seeds = derive_seeds(seed, n_episodes)
    return [
        _play_episode(spec, behavior, eid, s) for eid, s in enumerate(seeds)
    ]
