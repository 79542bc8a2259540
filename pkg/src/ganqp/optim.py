"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autograd import ShapeError, Tensor


@dataclass
class AdamState:
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.epsilon <= 0 or self.learning_rate <= 0:
            raise ValueError("learning_rate and epsilon must be positive")


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]):
    """One bias-corrected Adam update.  Returns (new_params, state); ``state`` is updated in place."""
    if len(params) != len(grads):
        raise ShapeError("params and grads differ in length")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p) for p in params]
        state.second_moment = [np.zeros_like(p) for p in params]
    if len(state.first_moment) != len(params):
        raise ShapeError("optimizer state does not match parameter list")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    new_params = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or state.first_moment[i].shape != p.shape:
            raise ShapeError(f"shape mismatch for parameter {i}: {p.shape} vs {g.shape}")
        m = state.first_moment[i]
        v = state.second_moment[i]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        step = state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        new_params.append(p - step)
    return new_params, state


class Adam:
    """Adam bound to a list of parameter tensors; ``step`` overwrites their data."""

    def __init__(self, params: Sequence[Tensor], lr: float = 2e-4, betas=(0.5, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(learning_rate=lr, beta1=betas[0], beta2=betas[1], epsilon=eps)

    def step(self, grads: Sequence) -> None:
        arrays = [g.data if isinstance(g, Tensor) else np.asarray(g, dtype=np.float64) for g in grads]
        new, _ = adam_step(self.state, [p.data for p in self.params], arrays)
        for p, value in zip(self.params, new):
            p.data = value
