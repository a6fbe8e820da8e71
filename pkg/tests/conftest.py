import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.optimize import linprog

settings.register_profile(
    "repo", deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


def lp_transport_cost(a, wa, b, wb, cost_fn):
    """Optimal transport cost by linear programming over the transport polytope.

    Independent of the sorting machinery: the HiGHS simplex returns an
    optimal vertex of {P >= 0 : P 1 = wa, P^T 1 = wb}.
    """
    a, wa, b, wb = map(np.asarray, (a, wa, b, wb))
    n, m = a.size, b.size
    C = np.asarray(cost_fn(a[:, None] - b[None, :]), dtype=float).ravel()
    A = np.zeros((n + m, n * m))
    for i in range(n):
        A[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        A[n + j, j::m] = 1.0
    res = linprog(C, A_eq=A, b_eq=np.concatenate([wa, wb]), bounds=(0, None), method="highs")
    assert res.status == 0
    return float(res.fun)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def vertex_transport_cost(a, wa, b, wb, cost_fn):
    """Optimal transport cost by enumerating every vertex of the transport polytope.

    Vertices are basic feasible solutions: choose n + m - 1 of the n*m cells,
    solve the marginal equations restricted to them, keep nonnegative
    solutions. Exhaustive, so only for tiny supports (at most 3 x 3).
    """
    import itertools

    a, wa, b, wb = map(np.asarray, (a, wa, b, wb))
    n, m = a.size, b.size
    assert n <= 3 and m <= 3
    C = np.asarray(cost_fn(a[:, None] - b[None, :]), dtype=float).ravel()
    A = np.zeros((n + m, n * m))
    for i in range(n):
        A[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        A[n + j, j::m] = 1.0
    rhs = np.concatenate([wa, wb])
    best = np.inf
    for cells in itertools.combinations(range(n * m), n + m - 1):
        sub = A[:, cells]
        if np.linalg.matrix_rank(sub) < n + m - 1:
            continue
        x, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
        if np.any(x < -1e-12) or np.abs(sub @ x - rhs).max() > 1e-10:
            continue
        best = min(best, float(C[list(cells)] @ x))
    return best


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one summary line per acceptance criterion, printed after the run."""

    def report(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
