"""Parameter storage, MLP layers, and the Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from ..errors import ContractError, ShapeError
from .tape import Array, GraphTape, Tensor, add_bias, matmul, relu, tanh

_ACTIVATIONS = {"tanh": tanh, "relu": relu}


@dataclass(frozen=True)
class MLPSpec:
    """Layer widths (input first) plus the hidden nonlinearity tag.

    The final layer is always linear; the activation applies between
    hidden layers only.
    """

    widths: tuple
    activation: str = "tanh"

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ContractError("an MLP needs at least input and output widths")
        if any(w <= 0 for w in self.widths):
            raise ContractError("layer widths must be positive")
        if self.activation not in _ACTIVATIONS:
            raise ContractError(f"unknown activation '{self.activation}'")


class ParamStore:
    """Named parameter tensors with per-parameter Adam moment buffers.

    The step counter increases by exactly 1 per optimizer step. Insertion
    order is the declaration order used for checkpoint layout.
    """

    def __init__(self):
        self.params: Dict[str, Tensor] = {}
        self.moment1: Dict[str, Array] = {}
        self.moment2: Dict[str, Array] = {}
        self.step = 0

    def create(self, name: str, values) -> Tensor:
        if name in self.params:
            raise ContractError(f"parameter '{name}' already exists")
        t = Tensor(values, requires_grad=True)
        self.params[name] = t
        self.moment1[name] = np.zeros_like(t.data)
        self.moment2[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self.params[name]
        except KeyError:
            raise ContractError(f"unknown parameter '{name}'") from None

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self):
        return list(self.params.keys())

    def n_values(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def clear_gradients(self) -> None:
        for t in self.params.values():
            t.grad = None

    def global_grad_norm(self) -> float:
        total = 0.0
        for t in self.params.values():
            if t.grad is not None:
                total += float((t.grad * t.grad).sum())
        return float(np.sqrt(total))

    def clip_gradients(self, max_norm: float) -> float:
        """Scale all gradients so their global norm is at most ``max_norm``."""
        norm = self.global_grad_norm()
        if norm > max_norm and norm > 0.0:
            factor = max_norm / norm
            for t in self.params.values():
                if t.grad is not None:
                    t.grad *= factor
        return norm

    def adam_step(
        self,
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ) -> None:
        """Bias-corrected Adam update; clears gradients afterwards.

        Uses the ``theta -= lr * m_hat / sqrt(v_hat + eps)`` convention
        (epsilon under the square root).
        """
        for name, t in self.params.items():
            if t.grad is None:
                raise ContractError(f"parameter '{name}' has no gradient")
        self.step += 1
        c1 = 1.0 - beta1**self.step
        c2 = 1.0 - beta2**self.step
        for name, t in self.params.items():
            g = t.grad
            m = self.moment1[name]
            v = self.moment2[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            t.data -= learning_rate * (m / c1) / np.sqrt(v / c2 + epsilon)
        self.clear_gradients()

    # -- checkpoint layout ---------------------------------------------------

    def state_arrays(self) -> Dict[str, Array]:
        """Parameters then moments, in declaration order."""
        out: Dict[str, Array] = {}
        for name, t in self.params.items():
            out[f"param/{name}"] = t.data
        for name in self.params:
            out[f"m1/{name}"] = self.moment1[name]
            out[f"m2/{name}"] = self.moment2[name]
        return out

    def load_state_arrays(self, arrays: Dict[str, Array]) -> None:
        for name, t in self.params.items():
            for key, dest in (
                (f"param/{name}", t.data),
                (f"m1/{name}", self.moment1[name]),
                (f"m2/{name}", self.moment2[name]),
            ):
                src = arrays.get(key)
                if src is None:
                    raise ContractError(f"checkpoint is missing array '{key}'")
                if src.shape != dest.shape:
                    raise ShapeError(
                        f"checkpoint array '{key}' has shape {src.shape}, "
                        f"expected {dest.shape}"
                    )
                dest[...] = src


def exponential_lr(step: int, base_lr: float, decay_rate: float = 0.9,
                   decay_steps: int = 100_000) -> float:
    """lr(step) = base_lr * decay_rate ** (step / decay_steps)."""
    return base_lr * decay_rate ** (step / decay_steps)


def init_mlp(
    store: ParamStore, prefix: str, spec: MLPSpec, rng: np.random.Generator
) -> None:
    """Create weight/bias tensors for every layer of ``spec``.

    Weights are normal scaled by 1/sqrt(fan_in); biases start at zero.
    """
    for i in range(len(spec.widths) - 1):
        fan_in, fan_out = spec.widths[i], spec.widths[i + 1]
        w = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
        store.create(f"{prefix}/w{i}", w)
        store.create(f"{prefix}/b{i}", np.zeros(fan_out))


def mlp_forward(
    store: ParamStore,
    prefix: str,
    spec: MLPSpec,
    x: Tensor,
    tape: Optional[GraphTape],
) -> Tensor:
    """Run the MLP named by ``prefix``; final layer is linear."""
    act = _ACTIVATIONS[spec.activation]
    n_layers = len(spec.widths) - 1
    if x.data.shape[-1] != spec.widths[0]:
        raise ShapeError(
            f"mlp '{prefix}' layer 0 expects input width {spec.widths[0]}, "
            f"got {x.data.shape[-1]}"
        )
    h = x
    for i in range(n_layers):
        name = f"{prefix}/w{i}"
        if name not in store:
            raise ContractError(f"mlp '{prefix}' has no weights for layer {i}")
        h = add_bias(tape, matmul(tape, h, store[name]), store[f"{prefix}/b{i}"])
        if i < n_layers - 1:
            h = act(tape, h)
    return h
