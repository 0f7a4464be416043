"""Adam with decoupled weight decay and a polynomial learning-rate decay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from cmsanet.autodiff.tensor import Tensor


def poly_lr(base_lr: float, step: int, max_steps: int, power: float) -> float:
    """``base_lr * (1 - step / max_steps) ** power``, clamped to 0 past the end."""
    if max_steps <= 0:
        return 0.0
    frac = 1.0 - step / max_steps
    return base_lr * frac ** power if frac > 0 else 0.0


@dataclass
class AdamState:
    base_lr: float = 2.5e-4
    max_steps: int = 1000
    power: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def lr(self) -> float:
        """Learning rate the next step will use."""
        return poly_lr(self.base_lr, self.t, self.max_steps, self.power)


def adam_step(params: Mapping[str, Tensor], state: AdamState) -> float:
    """Apply one update to every parameter that has a gradient.

    Parameters without ``grad`` are skipped (their moments are left alone).
    Returns the learning rate that was used.
    """
    lr = state.lr
    state.t += 1
    t = state.t
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay:
            update = update + state.weight_decay * p.data
        p.data -= lr * update
    return lr
