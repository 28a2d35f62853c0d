"""Windy grid world with a collectible goal cell.

Moves are displaced by wind: with probability ``wind`` a uniformly random
direction replaces the chosen one. Walls clamp. Landing on the goal pays
+1 and either respawns the goal on another cell or ends the episode.
Cell categories: 0 empty, 1 agent, 2 goal, 3 agent standing on the goal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..errors import ContractError

N_ACTIONS = 4  # 0=N, 1=S, 2=E, 3=W
_DELTAS = ((-1, 0), (1, 0), (0, 1), (0, -1))
N_CATEGORIES = 4


@dataclass(frozen=True)
class GoalGridSpec:
    width: int = 5
    height: int = 5
    wind: float = 0.3
    goal: Tuple[int, int] = (4, 4)
    respawn: bool = True
    episode_cap: int = 30

    def __post_init__(self):
        if not 0.0 <= self.wind <= 1.0:
            raise ContractError("wind must be a probability")
        r, c = self.goal
        if not (0 <= r < self.height and 0 <= c < self.width):
            raise ContractError("goal cell outside the grid")
        if self.episode_cap < 1:
            raise ContractError("episode cap must be positive")

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    def cell_index(self, pos: Tuple[int, int]) -> int:
        return pos[0] * self.width + pos[1]


@dataclass
class EnvStep:
    observation: np.ndarray
    reward: float
    done: bool


def grid_observation(spec: GoalGridSpec, agent: Tuple[int, int],
                     goal: Tuple[int, int]) -> np.ndarray:
    cells = np.zeros(spec.n_cells, dtype=np.int64)
    cells[spec.cell_index(goal)] = 2
    a = spec.cell_index(agent)
    cells[a] = 3 if agent == goal else 1
    return cells


def clamped_move(spec: GoalGridSpec, pos: Tuple[int, int], direction: int
                 ) -> Tuple[int, int]:
    dr, dc = _DELTAS[direction]
    r = min(max(pos[0] + dr, 0), spec.height - 1)
    c = min(max(pos[1] + dc, 0), spec.width - 1)
    return (r, c)


class GoalGridEnv:
    """Stateful wrapper; instances are independent and not thread-shared."""

    n_actions = N_ACTIONS
    obs_categories = N_CATEGORIES

    def __init__(self, spec: GoalGridSpec):
        self.spec = spec
        self.obs_cells = spec.n_cells
        self.agent = (0, 0)
        self.goal = spec.goal
        self.t = 0
        self.done = True
        self._rng: Optional[np.random.Generator] = None

    def reset(self, rng: np.random.Generator, agent_starts: bool = True) -> np.ndarray:
        del agent_starts  # single-player; kept for interface parity
        self._rng = rng
        self.goal = self.spec.goal
        free = [
            (r, c)
            for r in range(self.spec.height)
            for c in range(self.spec.width)
            if (r, c) != self.goal
        ]
        self.agent = free[int(rng.integers(0, len(free)))]
        self.t = 0
        self.done = False
        return grid_observation(self.spec, self.agent, self.goal)

    def legal_actions(self) -> List[int]:
        return list(range(N_ACTIONS))

    def step(self, action: int) -> EnvStep:
        if self.done:
            raise ContractError("step called on a finished episode")
        action = int(action)
        if not 0 <= action < N_ACTIONS:
            raise ContractError(f"action {action} outside the 4 directions")
        direction = action
        if self.spec.wind > 0.0 and self._rng.random() < self.spec.wind:
            direction = int(self._rng.integers(0, N_ACTIONS))
        self.agent = clamped_move(self.spec, self.agent, direction)
        reward = 0.0
        if self.agent == self.goal:
            reward = 1.0
            if self.spec.respawn:
                free = [
                    (r, c)
                    for r in range(self.spec.height)
                    for c in range(self.spec.width)
                    if (r, c) != self.agent
                ]
                self.goal = free[int(self._rng.integers(0, len(free)))]
            else:
                self.done = True
        self.t += 1
        if self.t >= self.spec.episode_cap:
            self.done = True
        return EnvStep(
            grid_observation(self.spec, self.agent, self.goal), reward, self.done
        )


def goal_seeking_act(
    spec: GoalGridSpec,
    agent: Tuple[int, int],
    goal: Tuple[int, int],
    skill: float,
    rng: np.random.Generator,
) -> int:
    """With probability ``skill`` step toward the goal, else move uniformly."""
    if rng.random() >= skill:
        return int(rng.integers(0, N_ACTIONS))

    def manhattan(pos):
        return abs(pos[0] - goal[0]) + abs(pos[1] - goal[1])

    dist = manhattan(agent)
    best = [a for a in range(N_ACTIONS) if manhattan(clamped_move(spec, agent, a)) < dist]
    if not best:
        return int(rng.integers(0, N_ACTIONS))
    return int(best[rng.integers(0, len(best))])
