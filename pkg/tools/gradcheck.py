"""Central finite-difference gradient checks for the tensor engine."""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from tools.tensor import ComputationTape, Tensor, backward


@dataclass
class GradCheckResult:
    """Worst-case agreement between analytic and numerical gradients."""
    max_relative_error: float
    worst_tensor: Optional[str]
    checked_entries: int

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.max_relative_error < tolerance


def relative_error(analytic: float, numeric: float, floor: float = 1e-5) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_gradients(loss_fn: Callable[[], Tensor],
                    tensors: Sequence[Tensor],
                    h: float = 1e-5,
                    max_entries_per_tensor: Optional[int] = None,
                    seed: int = 0) -> GradCheckResult:
    """
    Compare tape gradients of `loss_fn` with central differences.

    Args:
        loss_fn: Builds the scalar loss from the current tensor values
        tensors: Leaves to check; they must require gradients
        h: Finite-difference step
        max_entries_per_tensor: Sample at most this many coordinates per tensor
        seed: Seed for coordinate sampling

    Returns:
        GradCheckResult with the maximum relative error seen
    """
    for t in tensors:
        t.grad = None
    with ComputationTape() as tape:
        loss = loss_fn()
    backward(tape, loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_name = None
    checked = 0
    for t, grad in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        indices: List[int] = list(range(flat.size))
        if max_entries_per_tensor is not None and flat.size > max_entries_per_tensor:
            indices = sorted(rng.choice(flat.size, size=max_entries_per_tensor, replace=False).tolist())
        for i in indices:
            original = flat[i]
            flat[i] = original + h
            plus = loss_fn().item()
            flat[i] = original - h
            minus = loss_fn().item()
            flat[i] = original
            numeric = (plus - minus) / (2.0 * h)
            err = relative_error(float(grad.reshape(-1)[i]), numeric)
            checked += 1
            if err > worst:
                worst = err
                worst_name = t.name
    return GradCheckResult(max_relative_error=worst, worst_tensor=worst_name, checked_entries=checked)
