"""Adam with bias correction over a dict of named numpy parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch


@dataclass
class OptimizerState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    state: OptimizerState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray | None],
    lr: float,
) -> dict[str, np.ndarray]:
    """Update ``params`` in place and return them.

    A missing (``None``) gradient counts as zero; the moments still decay.
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is not None and g.shape != p.shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        if name in state.m and state.m[name].shape != p.shape:
            raise ShapeMismatch(f"{name}: moment {state.m[name].shape} vs parameter {p.shape}")

    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params
