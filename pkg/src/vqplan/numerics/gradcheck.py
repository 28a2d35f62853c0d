"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from ..errors import ContractError
from .optim import ParamStore
from .tape import GraphTape, Tensor, backward


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    passed: bool
    worst_param: str
    n_coordinates: int
    per_param: Dict[str, float] = field(default_factory=dict)


def _rel_err(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    scale = max(abs(analytic), abs(numeric))
    if scale < floor:
        return 0.0
    return abs(analytic - numeric) / scale


def grad_check(
    params: ParamStore,
    loss_fn: Callable[[Optional[GraphTape]], Tensor],
    step: float = 1e-4,
    tolerance: float = 1e-3,
) -> GradCheckReport:
    """Compare tape gradients of ``loss_fn`` against central differences.

    ``loss_fn`` takes an optional tape, reads the current parameter values
    and returns a scalar loss tensor. It must be deterministic; this is
    verified by evaluating it twice before differencing.
    """
    probe_a = float(loss_fn(None).data)
    probe_b = float(loss_fn(None).data)
    if probe_a != probe_b:
        raise ContractError(
            f"loss_fn is not deterministic ({probe_a!r} != {probe_b!r}); "
            "gradient checking requires a pure function of the parameters"
        )

    params.clear_gradients()
    tape = GraphTape()
    loss = loss_fn(tape)
    backward(tape, loss)
    analytic = {
        name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
        for name, t in params.params.items()
    }
    params.clear_gradients()

    worst = 0.0
    worst_param = ""
    per_param: Dict[str, float] = {}
    n_coords = 0
    for name, t in params.params.items():
        flat = t.data.reshape(-1)
        ana = analytic[name].reshape(-1)
        param_worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(loss_fn(None).data)
            flat[i] = orig - step
            down = float(loss_fn(None).data)
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            err = _rel_err(float(ana[i]), numeric)
            n_coords += 1
            if err > param_worst:
                param_worst = err
            if err > worst:
                worst, worst_param = err, name
        per_param[name] = param_worst
    return GradCheckReport(
        max_rel_error=worst,
        tolerance=tolerance,
        passed=worst < tolerance,
        worst_param=worst_param,
        n_coordinates=n_coords,
        per_param=per_param,
    )
