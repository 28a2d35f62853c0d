"""Tic-tac-toe against an opponent folded into the environment.

The agent only ever sees boards on its own turn: after it moves, the
opponent's reply is applied internally and the post-reply board comes
back as the next observation. From the agent's perspective the game is a
single-player stochastic environment; the opponent's action is never
exposed, only its effect.

Rewards are terminal-only: +1 win, 0 draw, -1 loss. Cell categories:
0 empty, 1 agent mark, 2 opponent mark.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import ContractError

N_CELLS = 9
N_ACTIONS = 9
N_CATEGORIES = 3
AGENT, OPPONENT = 1, 2

_LINES = (
    (0, 1, 2), (3, 4, 5), (6, 7, 8),
    (0, 3, 6), (1, 4, 7), (2, 5, 8),
    (0, 4, 8), (2, 4, 6),
)

Board = Tuple[int, ...]
EMPTY_BOARD: Board = (0,) * 9


@dataclass(frozen=True)
class BlindMatchSpec:
    """Opponent policy: 'uniform' or 'epsilon_minimax' with mix-in rate."""

    opponent: str = "uniform"
    epsilon: float = 0.0

    def __post_init__(self):
        if self.opponent not in ("uniform", "epsilon_minimax"):
            raise ContractError(f"unknown opponent policy '{self.opponent}'")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ContractError("epsilon must lie in [0, 1]")


@dataclass
class EnvStep:
    observation: np.ndarray
    reward: float
    done: bool


def legal_moves(board: Board) -> List[int]:
    return [i for i in range(9) if board[i] == 0]


def winner(board: Board) -> int:
    """0 if no line is complete, else the mark that owns one."""
    for a, b, c in _LINES:
        if board[a] != 0 and board[a] == board[b] == board[c]:
            return board[a]
    return 0


def place(board: Board, cell: int, mark: int) -> Board:
    if board[cell] != 0:
        raise ContractError(f"cell {cell} is already occupied")
    out = list(board)
    out[cell] = mark
    return tuple(out)


def board_observation(board: Board) -> np.ndarray:
    return np.asarray(board, dtype=np.int64)


@functools.lru_cache(maxsize=None)
def _minimax(board: Board, agent_to_move: bool) -> float:
    """Game value with both sides playing perfectly; memoizes the full tree."""
    w = winner(board)
    if w == AGENT:
        return 1.0
    if w == OPPONENT:
        return -1.0
    moves = legal_moves(board)
    if not moves:
        return 0.0
    if agent_to_move:
        return max(_minimax(place(board, m, AGENT), False) for m in moves)
    return min(_minimax(place(board, m, OPPONENT), True) for m in moves)


def opponent_distribution(spec: BlindMatchSpec, board: Board) -> Dict[int, float]:
    """Probability of each opponent reply on a nonterminal board."""
    moves = legal_moves(board)
    if not moves:
        raise ContractError("no legal opponent replies")
    if spec.opponent == "uniform":
        return {m: 1.0 / len(moves) for m in moves}
    values = {m: _minimax(place(board, m, OPPONENT), True) for m in moves}
    best = min(values.values())
    optimal = [m for m in moves if values[m] == best]
    dist = {m: spec.epsilon / len(moves) for m in moves}
    for m in optimal:
        dist[m] += (1.0 - spec.epsilon) / len(optimal)
    return dist


def sample_opponent_move(
    spec: BlindMatchSpec, board: Board, rng: np.random.Generator
) -> int:
    dist = opponent_distribution(spec, board)
    moves = sorted(dist)
    probs = np.array([dist[m] for m in moves])
    return int(moves[rng.choice(len(moves), p=probs / probs.sum())])


class BlindMatchEnv:
    """Stateful wrapper; instances are independent and not thread-shared."""

    n_actions = N_ACTIONS
    obs_cells = N_CELLS
    obs_categories = N_CATEGORIES

    def __init__(self, spec: BlindMatchSpec):
        self.spec = spec
        self.board: Board = EMPTY_BOARD
        self.done = True
        self._rng: Optional[np.random.Generator] = None

    def reset(self, rng: np.random.Generator, agent_starts: bool = True) -> np.ndarray:
        self._rng = rng
        self.board = EMPTY_BOARD
        self.done = False
        if not agent_starts:
            reply = sample_opponent_move(self.spec, self.board, self._rng)
            self.board = place(self.board, reply, OPPONENT)
        return board_observation(self.board)

    def legal_actions(self) -> List[int]:
        return legal_moves(self.board)

    def step(self, action: int) -> EnvStep:
        if self.done:
            raise ContractError("step called on a finished episode")
        self.board = place(self.board, int(action), AGENT)
        if winner(self.board) == AGENT:
            self.done = True
            return EnvStep(board_observation(self.board), 1.0, True)
        if not legal_moves(self.board):
            self.done = True
            return EnvStep(board_observation(self.board), 0.0, True)
        reply = sample_opponent_move(self.spec, self.board, self._rng)
        self.board = place(self.board, reply, OPPONENT)
        if winner(self.board) == OPPONENT:
            self.done = True
            return EnvStep(board_observation(self.board), -1.0, True)
        if not legal_moves(self.board):
            self.done = True
            return EnvStep(board_observation(self.board), 0.0, True)
        return EnvStep(board_observation(self.board), 0.0, False)


# ---------------------------------------------------------------------------
# exact oracles

_EXPECTIMAX_CACHE: Dict[Tuple, Dict] = {}


def exact_value(
    spec: BlindMatchSpec, board: Board, mode: str = "expectimax"
) -> Tuple[float, List[int]]:
    """Full-depth value for the agent to move, plus all optimal first actions.

    Modes: 'expectimax' takes the expectation over the configured opponent
    policy; 'minimax' assumes the worst reply; 'cooperative' the best.
    """
    board = tuple(int(c) for c in board)
    if mode not in ("expectimax", "minimax", "cooperative"):
        raise ContractError(f"unknown oracle mode '{mode}'")
    key = (spec.opponent, spec.epsilon, mode)
    memo = _EXPECTIMAX_CACHE.setdefault(key, {})

    def agent_value(b: Board) -> float:
        if b in memo:
            return memo[b]
        w = winner(b)
        if w == AGENT:
            val = 1.0
        elif w == OPPONENT:
            val = -1.0
        else:
            moves = legal_moves(b)
            val = 0.0 if not moves else max(after_agent(place(b, m, AGENT)) for m in moves)
        memo[b] = val
        return val

    def after_agent(b: Board) -> float:
        w = winner(b)
        if w == AGENT:
            return 1.0
        moves = legal_moves(b)
        if not moves:
            return 0.0
        if mode == "minimax":
            return min(agent_value(place(b, m, OPPONENT)) for m in moves)
        if mode == "cooperative":
            return max(agent_value(place(b, m, OPPONENT)) for m in moves)
        dist = opponent_distribution(spec, b)
        return sum(p * agent_value(place(b, m, OPPONENT)) for m, p in dist.items())

    moves = legal_moves(board)
    if winner(board) != 0 or not moves:
        return agent_value(board), []
    values = {m: after_agent(place(board, m, AGENT)) for m in moves}
    best = max(values.values())
    optimal = [m for m in moves if abs(values[m] - best) < 1e-12]
    return best, optimal


def behavior_policy_act(
    spec: BlindMatchSpec, board: Board, skill: float, rng: np.random.Generator
) -> int:
    """With probability ``skill`` play an expectimax-optimal move, else uniform."""
    board = tuple(int(c) for c in board)
    moves = legal_moves(board)
    if not moves:
        raise ContractError("no legal moves to act on")
    if rng.random() < skill:
        _, optimal = exact_value(spec, board, "expectimax")
        pool = optimal if optimal else moves
    else:
        pool = moves
    return int(pool[rng.integers(0, len(pool))])
