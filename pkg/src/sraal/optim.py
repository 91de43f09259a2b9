"""SGD-with-momentum and Adam updates over named parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimState:
    """Hyperparameters plus per-parameter moment buffers.

    kind is "sgd-momentum" or "adam".  Buffers are allocated lazily on first
    use and shape-match their parameters; `step` counts completed updates.
    """

    kind: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    slots: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd-momentum", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")


def optimizer_step(
    state: OptimState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
) -> dict[str, np.ndarray]:
    """Apply one update in place and return the parameter dict.

    Update order is the iteration order of `params`, so a given (state,
    params, grads) triple is bitwise deterministic.
    """
    state.step += 1
    if state.kind == "sgd-momentum":
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {name!r}")
            v = state.slots.setdefault(name, np.zeros_like(p))
            v *= state.momentum
            v += g
            p -= state.lr * v
    else:
        t = state.step
        bias1 = 1.0 - state.beta1**t
        bias2 = 1.0 - state.beta2**t
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {name!r}")
            slot = state.slots.setdefault(name, (np.zeros_like(p), np.zeros_like(p)))
            m, v = slot
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            p -= state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
    return params
