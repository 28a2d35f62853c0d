"""Logged-episode records and their line-delimited file format.

A trajectory is the only training input: observations are symbolic cell
grids (one category integer per cell), with actions and rewards between
consecutive observations. Files are JSON lines with a single header line
carrying the environment metadata and seeds; serialization is canonical
(sorted keys, no timestamps) so identical inputs give identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from .errors import ContractError

FORMAT_VERSION = 1


@dataclass
class Trajectory:
    """One episode: T observations, T-1 actions and rewards."""

    episode_id: int
    observations: np.ndarray  # [T, n_cells] int64 cell categories
    actions: np.ndarray  # [T-1] int64
    rewards: np.ndarray  # [T-1] float64

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=np.int64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        if self.observations.ndim != 2 or len(self.observations) < 2:
            raise ContractError("a trajectory needs at least two observations")
        if len(self.actions) != len(self.observations) - 1:
            raise ContractError("need exactly one action per transition")
        if len(self.rewards) != len(self.actions):
            raise ContractError("need exactly one reward per transition")

    @property
    def length(self) -> int:
        return len(self.observations)

    @property
    def final_return(self) -> float:
        return float(self.rewards.sum())

    def returns(self, discount: float = 1.0) -> np.ndarray:
        """Discounted reward-to-go from each decision step."""
        out = np.zeros(len(self.rewards))
        acc = 0.0
        for t in range(len(self.rewards) - 1, -1, -1):
            acc = self.rewards[t] + discount * acc
            out[t] = acc
        return out


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_trajectories(path, trajectories: List[Trajectory], header: Dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump({"header": {"format_version": FORMAT_VERSION, **header}}) + "\n")
        for traj in trajectories:
            n = traj.length
            for t in range(n):
                last = t == n - 1
                rec = {
                    "episode_id": traj.episode_id,
                    "t": t,
                    "observation": traj.observations[t].tolist(),
                    "action": None if last else int(traj.actions[t]),
                    "reward": None if last else float(traj.rewards[t]),
                    "done": last,
                }
                fh.write(_dump(rec) + "\n")


def read_trajectories(path) -> Tuple[List[Trajectory], Dict]:
    with open(path, "r", encoding="utf-8") as fh:
        first = json.loads(fh.readline())
        if "header" not in first:
            raise ContractError(f"{path} has no trajectory header line")
        header = first["header"]
        episodes: Dict[int, list] = {}
        order: List[int] = []
        for line in fh:
            rec = json.loads(line)
            eid = rec["episode_id"]
            if eid not in episodes:
                episodes[eid] = []
                order.append(eid)
            episodes[eid].append(rec)
    out = []
    for eid in order:
        recs = sorted(episodes[eid], key=lambda r: r["t"])
        obs = np.array([r["observation"] for r in recs], dtype=np.int64)
        actions = np.array([r["action"] for r in recs[:-1]], dtype=np.int64)
        rewards = np.array([r["reward"] for r in recs[:-1]], dtype=np.float64)
        if not recs[-1]["done"]:
            raise ContractError(f"episode {eid} in {path} has no terminal record")
        out.append(Trajectory(eid, obs, actions, rewards))
    return out, header


def episode_split(episode_id: int, val_fraction: float = 0.1) -> str:
    """Deterministic train/val assignment by hashing the episode id."""
    digest = hashlib.sha256(f"episode-{episode_id}".encode()).digest()
    bucket = int.from_bytes(digest[:8], "big") / 2**64
    return "val" if bucket < val_fraction else "train"


def split_trajectories(
    trajectories: List[Trajectory], val_fraction: float = 0.1
) -> Tuple[List[Trajectory], List[Trajectory]]:
    train = [t for t in trajectories if episode_split(t.episode_id, val_fraction) == "train"]
    val = [t for t in trajectories if episode_split(t.episode_id, val_fraction) == "val"]
    return train, val
