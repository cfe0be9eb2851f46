"""Adam with an exponentially annealed learning rate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteError, ShapeError


@dataclass(frozen=True)
class ExpSchedule:
    start: float
    end: float
    total_steps: int

    def __post_init__(self):
        if not (self.start > 0 and self.end > 0):
            raise ValueError("learning rates must be positive")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")

    def __call__(self, step: int) -> float:
        frac = min(step, self.total_steps) / self.total_steps
        return self.start * (self.end / self.start) ** frac


@dataclass
class AdamState:
    n_params: int
    lr_schedule: ExpSchedule
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.n_params)
        if self.v is None:
            self.v = np.zeros(self.n_params)


def adam_step(state: AdamState, params, grads):
    """One in-place Adam descent update; returns ``(state, params)``.

    ``params`` and ``grads`` are ParamSets (or flat arrays) with aligned
    layouts; ``grads`` is the gradient of the loss being minimised.
    """
    p = params if isinstance(params, np.ndarray) else params.flat
    g = grads if isinstance(grads, np.ndarray) else grads.flat
    if p.shape != g.shape or p.size != state.m.size:
        raise ShapeError(f"misaligned Adam inputs: params {p.shape}, grads {g.shape}, state {state.m.shape}")
    if not np.all(np.isfinite(g)):
        raise NonFiniteError(f"non-finite gradient at step {state.step}", step=state.step)
    lr = state.lr_schedule(state.step)
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * g
    state.v *= b2
    state.v += (1.0 - b2) * (g * g)
    t = state.step + 1
    step_size = lr * np.sqrt(1.0 - b2**t) / (1.0 - b1**t)
    # epsilon applied to the bias-corrected second moment, as in the reference form
    eps_hat = state.epsilon * np.sqrt(1.0 - b2**t)
    p -= step_size * state.m / (np.sqrt(state.v) + eps_hat)
    state.step = t
    if hasattr(params, "bump"):
        params.bump()
    return state, params
