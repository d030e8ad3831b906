import warnings

import pytest

from betafact.models import ModelKind, Theta, check_constraints

_ACCEPTANCE = []


def record_acceptance(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    _ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    return record_acceptance


class ConstraintWatcher:
    """Fit callback that checks every iterate against the model's constraints."""

    def __init__(self, spec):
        self.spec = spec
        self.checked = 0
        self.failures = []

    def __call__(self, iteration, theta):
        self.checked += 1
        v = check_constraints(self.spec, theta)
        if v:
            self.failures.append((iteration, v[:3]))


def random_state(rng, kind, L=20, N=200, K=3, Nv=2):
    """Random positive data and a feasible initial state for ``kind``."""
    kind = ModelKind(kind)
    Y = rng.gamma(2.0, 0.5, size=(L, N)) + 1e-3
    M = rng.uniform(0.1, 1.0, size=(L, K))
    A = rng.uniform(0.05, 1.0, size=(K, N))
    if kind is not ModelKind.NMF:
        A /= A.sum(axis=0)
    V = B = None
    if kind is ModelKind.SLMM:
        V = rng.uniform(0.0, 0.5, size=(L, Nv))
        B = rng.uniform(0.0, 0.2, size=(Nv, N))
    return Y, Theta(M, A, V, B)


@pytest.fixture
def no_heuristic_warning():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield

