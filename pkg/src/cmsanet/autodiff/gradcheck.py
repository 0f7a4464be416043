"""Central finite-difference gradient checking.

The numerical side only ever calls the scalar loss function on perturbed
copies of the inputs, so it stays independent of the backward pass it checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from cmsanet.autodiff.tensor import Tensor

# Gradients smaller than this are compared absolutely rather than relatively.
REL_FLOOR = 1e-6


def rel_error(analytic, numeric, floor: float = REL_FLOOR) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numerical_grad(f: Callable[[], float], x: Tensor, index, h: float = 1e-5) -> float:
    """d f / d x[index] by central differences; ``x.data`` is restored afterwards."""
    old = x.data[index]
    x.data[index] = old + h
    fp = f()
    x.data[index] = old - h
    fm = f()
    x.data[index] = old
    return (fp - fm) / (2.0 * h)


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    checked: int
    worst_index: tuple = ()
    analytic: list = field(default_factory=list)
    numeric: list = field(default_factory=list)

    def passed(self, tol: float) -> bool:
        return self.max_rel_err < tol


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Mapping[str, Tensor],
    *,
    h: float = 1e-5,
    samples: int | None = None,
    rng: np.random.Generator | None = None,
    indices: Mapping[str, Sequence[tuple]] | None = None,
) -> list[CheckResult]:
    """Compare backward gradients against central differences.

    ``loss_fn`` rebuilds the graph from the current tensor values and returns
    a scalar tensor. With ``samples`` set, only that many random entries per
    tensor are perturbed; ``indices`` pins explicit entries instead.
    """
    for t in tensors.values():
        t.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for k, t in tensors.items()}

    def f() -> float:
        return float(loss_fn().data)

    rng = rng or np.random.default_rng(0)
    results = []
    for name, t in tensors.items():
        if indices is not None and name in indices:
            idx_list = [tuple(i) for i in indices[name]]
        elif samples is None or samples >= t.size:
            idx_list = list(np.ndindex(t.shape))
        else:
            flat = rng.choice(t.size, size=samples, replace=False)
            idx_list = [np.unravel_index(i, t.shape) for i in flat]
        a_vals, n_vals = [], []
        for idx in idx_list:
            a_vals.append(float(analytic[name][idx]))
            n_vals.append(numerical_grad(f, t, idx, h))
        errs = rel_error(a_vals, n_vals) if idx_list else np.zeros(0)
        worst = int(np.argmax(errs)) if errs.size else 0
        results.append(CheckResult(
            name=name,
            max_rel_err=float(errs.max()) if errs.size else 0.0,
            checked=len(idx_list),
            worst_index=tuple(int(i) for i in idx_list[worst]) if idx_list else (),
            analytic=a_vals,
            numeric=n_vals,
        ))
    for t in tensors.values():
        t.zero_grad()
    return results
