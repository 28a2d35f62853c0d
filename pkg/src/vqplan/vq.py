"""Vector quantization bottleneck with EMA codebook learning.

A codebook maps continuous encoder outputs to their nearest embedding by
Euclidean distance (lowest index wins ties). Embeddings are learned as
exponential moving averages of the vectors assigned to each code, with
Laplace smoothing of the counts; gradients reach the encoder through the
straight-through primitive, never the codebook.

``quantize`` is read-only and thread-safe; ``ema_update`` and
``dead_code_restart`` mutate the codebook and need exclusive access.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError, ShapeError
from .numerics import Array, GraphTape, Tensor
from .numerics import straight_through as _straight_through_op


@dataclass
class QuantizeResult:
    index: int
    embedding: Array
    unquantized: Array
    commitment_term: float


class Codebook:
    """K embedding vectors of width D plus EMA assignment statistics."""

    def __init__(
        self,
        embeddings: Array,
        decay: float = 0.99,
        laplace_epsilon: float = 1e-5,
    ):
        emb = np.asarray(embeddings, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] < 2:
            raise ContractError("a codebook needs a [K, D] matrix with K >= 2")
        if not np.all(np.isfinite(emb)):
            raise ContractError("codebook embeddings must be finite")
        if not 0.0 < decay < 1.0:
            raise ContractError("decay must lie in (0, 1)")
        if laplace_epsilon < 0.0:
            raise ContractError("laplace_epsilon must be non-negative")
        self.embeddings = emb.copy()
        self.decay = float(decay)
        self.laplace_epsilon = float(laplace_epsilon)
        # Fresh statistics: a code keeps its initial embedding until the
        # first batch assigns it mass, then jumps to the assignment mean.
        self.ema_counts = np.zeros(emb.shape[0], dtype=np.float64)
        self.ema_sums = np.zeros_like(emb)

    @property
    def K(self) -> int:
        return self.embeddings.shape[0]

    @property
    def D(self) -> int:
        return self.embeddings.shape[1]

    @classmethod
    def from_batch(
        cls,
        batch: Array,
        k: int,
        rng: np.random.Generator,
        decay: float = 0.99,
        laplace_epsilon: float = 1e-5,
    ) -> "Codebook":
        """Initialize from K distinct vectors sampled from a data batch."""
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[0] == 0:
            raise ContractError("initialization batch must be [N, D] and nonempty")
        uniq = np.unique(batch, axis=0)
        if uniq.shape[0] >= k:
            picks = rng.choice(uniq.shape[0], size=k, replace=False)
            emb = uniq[picks]
        else:
            # Not enough distinct vectors; jitter duplicates apart.
            picks = rng.choice(batch.shape[0], size=k, replace=True)
            emb = batch[picks] + 1e-6 * rng.standard_normal((k, batch.shape[1]))
        return cls(emb, decay=decay, laplace_epsilon=laplace_epsilon)


def nearest_code_bruteforce(codebook: Codebook, z_u: Array) -> int:
    """Reference O(K*D) linear scan; the oracle `quantize` must agree with."""
    best, best_d = 0, np.inf
    for k in range(codebook.K):
        diff = z_u - codebook.embeddings[k]
        d = float(diff @ diff)
        if d < best_d:
            best, best_d = k, d
    return best


def quantize(codebook: Codebook, z_u) -> QuantizeResult:
    """Nearest code by squared Euclidean distance, lowest index on ties.

    The commitment term is exactly ||z_u - e_c||^2 for the selected code.
    """
    z = np.asarray(z_u, dtype=np.float64)
    if z.shape != (codebook.D,):
        raise ShapeError(f"expected a {codebook.D}-vector, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ContractError("quantize input must be finite")
    diffs = codebook.embeddings - z
    dists = np.einsum("kd,kd->k", diffs, diffs)
    index = int(np.argmin(dists))  # argmin returns the first (lowest) index
    embedding = codebook.embeddings[index].copy()
    delta = z - embedding
    return QuantizeResult(
        index=index,
        embedding=embedding,
        unquantized=z.copy(),
        commitment_term=float(delta @ delta),
    )


def quantize_rows(codebook: Codebook, z_rows: Array) -> np.ndarray:
    """Vectorized nearest-code indices for a [N, D] batch."""
    z = np.asarray(z_rows, dtype=np.float64)
    d2 = (
        (z * z).sum(axis=1, keepdims=True)
        - 2.0 * z @ codebook.embeddings.T
        + (codebook.embeddings * codebook.embeddings).sum(axis=1)
    )
    return np.argmin(d2, axis=1)


def straight_through(
    tape: Optional[GraphTape], quantized: Array, z_u: Tensor
) -> Tensor:
    """Forward the code embedding, pass gradient to ``z_u`` unchanged."""
    return _straight_through_op(tape, quantized, z_u)


def ema_update(codebook: Codebook, assignments: Sequence[Tuple[int, Array]]) -> None:
    """Fold one batch of (index, vector) assignments into the EMA statistics.

    N_k and m_k decay by gamma and absorb the batch counts/sums; embeddings
    become m_k / N_hat_k where N_hat is the Laplace-smoothed count. Codes
    with no assignments keep their decayed statistics (embedding unchanged
    when epsilon is zero).
    """
    if not assignments:
        raise ContractError("ema_update needs a nonempty batch")
    counts = np.zeros(codebook.K, dtype=np.float64)
    sums = np.zeros_like(codebook.ema_sums)
    for index, vec in assignments:
        counts[index] += 1.0
        sums[index] += np.asarray(vec, dtype=np.float64)
    g = codebook.decay
    codebook.ema_counts *= g
    codebook.ema_counts += (1.0 - g) * counts
    codebook.ema_sums *= g
    codebook.ema_sums += (1.0 - g) * sums
    eps = codebook.laplace_epsilon
    if eps > 0.0:
        total = codebook.ema_counts.sum()
        smoothed = (codebook.ema_counts + eps) / (total + codebook.K * eps) * total
    else:
        smoothed = codebook.ema_counts
    alive = smoothed > 0.0
    codebook.embeddings[alive] = codebook.ema_sums[alive] / smoothed[alive, None]


def dead_code_restart(
    codebook: Codebook,
    batch: Array,
    usage_threshold: float,
    rng: np.random.Generator,
) -> int:
    """Re-seed codes whose EMA count fell below the threshold.

    Each dead code becomes a random vector from the batch; returns how
    many codes were restarted.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise ContractError("dead_code_restart needs a nonempty [N, D] batch")
    dead = np.flatnonzero(codebook.ema_counts < usage_threshold)
    for k in dead:
        vec = batch[rng.integers(0, batch.shape[0])]
        codebook.embeddings[k] = vec
        codebook.ema_sums[k] = vec
        codebook.ema_counts[k] = 1.0
    return int(dead.size)


class QuantizerStack:
    """C independent codebooks whose codes concatenate into a joint latent.

    The encoder output is split into C equal-width chunks, one per book;
    the joint index is the tuple of per-book indices.
    """

    def __init__(self, codebooks: List[Codebook]):
        if not codebooks:
            raise ContractError("a quantizer stack needs at least one codebook")
        self.codebooks = list(codebooks)

    @property
    def n_books(self) -> int:
        return len(self.codebooks)

    @property
    def widths(self) -> List[int]:
        return [cb.D for cb in self.codebooks]

    @property
    def total_width(self) -> int:
        return sum(self.widths)

    @property
    def sizes(self) -> List[int]:
        return [cb.K for cb in self.codebooks]

    def split(self, z: Array) -> List[Array]:
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != self.total_width:
            raise ShapeError(
                f"expected width {self.total_width}, got {z.shape[-1]}"
            )
        out, at = [], 0
        for w in self.widths:
            out.append(z[..., at : at + w])
            at += w
        return out

    def quantize(self, z: Array) -> List[QuantizeResult]:
        return [quantize(cb, chunk) for cb, chunk in zip(self.codebooks, self.split(z))]

    def embedding_of(self, indices: Sequence[int]) -> Array:
        if len(indices) != self.n_books:
            raise ContractError(
                f"joint index needs {self.n_books} entries, got {len(indices)}"
            )
        return np.concatenate(
            [cb.embeddings[int(i)] for cb, i in zip(self.codebooks, indices)]
        )

    def state_arrays(self, prefix: str) -> dict:
        out = {}
        for i, cb in enumerate(self.codebooks):
            out[f"{prefix}/book{i}/embeddings"] = cb.embeddings
            out[f"{prefix}/book{i}/ema_counts"] = cb.ema_counts
            out[f"{prefix}/book{i}/ema_sums"] = cb.ema_sums
        return out

    def load_state_arrays(self, prefix: str, arrays: dict) -> None:
        for i, cb in enumerate(self.codebooks):
            cb.embeddings[...] = arrays[f"{prefix}/book{i}/embeddings"]
            cb.ema_counts[...] = arrays[f"{prefix}/book{i}/ema_counts"]
            cb.ema_sums[...] = arrays[f"{prefix}/book{i}/ema_sums"]
