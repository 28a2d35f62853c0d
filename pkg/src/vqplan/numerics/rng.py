"""Deterministic, splittable random number generation.

All randomness in the package flows through counter-based Philox
generators created here and threaded explicitly by the caller. Splitting
uses SeedSequence spawning, so derived streams (per episode, per worker,
per game) are reproducible and independent regardless of draw order.
"""

from __future__ import annotations

from typing import List

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def split(rng: np.random.Generator, n: int) -> List[np.random.Generator]:
    """n independent child generators; the parent stays usable."""
    return list(rng.spawn(n))


def derive_seeds(seed: int, n: int) -> List[int]:
    """n reproducible 64-bit child seeds of a root seed."""
    ss = np.random.SeedSequence(int(seed))
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in ss.spawn(n)]


def rng_state_to_json(rng: np.random.Generator) -> dict:
    """Serializable snapshot of a generator's full state."""

    def conv(obj):
        if isinstance(obj, dict):
            return {k: conv(v) for k, v in obj.items()}
        if isinstance(obj, np.ndarray):
            return {"__ndarray__": obj.tolist(), "dtype": str(obj.dtype)}
        if isinstance(obj, (np.integer,)):
            return int(obj)
        return obj

    return conv(rng.bit_generator.state)


def rng_state_from_json(state: dict) -> np.random.Generator:
    def conv(obj):
        if isinstance(obj, dict):
            if "__ndarray__" in obj:
                return np.array(obj["__ndarray__"], dtype=obj["dtype"])
            return {k: conv(v) for k, v in obj.items()}
        return obj

    restored = conv(state)
    bitgen = np.random.Philox()
    bitgen.state = restored
    return np.random.Generator(bitgen)
