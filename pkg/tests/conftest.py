import numpy as np
import pytest

from cmsanet.autodiff import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def param(arr):
    return Tensor(np.array(arr, dtype=np.float64), requires_grad=True)


def fd_check(loss_fn, tensors, tol, **kw):
    """Run the finite-difference oracle and assert every tensor is within ``tol``."""
    from cmsanet.autodiff import check_gradients

    results = check_gradients(loss_fn, tensors, **kw)
    for r in results:
        assert r.checked > 0
        assert r.max_rel_err < tol, f"{r.name}: rel err {r.max_rel_err:.3g} at {r.worst_index}"
    return results


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(label: str, ok: bool, detail: str = "") -> None:
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  ({detail})" if detail else ""))
        assert ok, f"{label}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
