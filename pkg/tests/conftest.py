"""Independent reference solvers used as test oracles."""
import itertools

import numpy as np
import pytest


def brute_force_nnls(X, y):
    """Minimum of ||y - X b||^2 over b >= 0 by enumerating supports.

    Every support of size <= min(n, p) is solved by unconstrained least
    squares; supports with a negative coefficient are infeasible. The
    optimum of a problem in general position is attained on one of them.
    """
    n, p = X.shape
    best = float(y @ y)
    best_beta = np.zeros(p)
    for k in range(1, min(n, p) + 1):
        for S in itertools.combinations(range(p), k):
            S = list(S)
            coef, *_ = np.linalg.lstsq(X[:, S], y, rcond=None)
            if np.any(coef < 0):
                continue
            r = y - X[:, S] @ coef
            obj = float(r @ r)
            if obj < best:
                best = obj
                best_beta = np.zeros(p)
                best_beta[S] = coef
    return best, best_beta


def brute_force_transport(cost, a, b):
    """Optimal transport cost by enumerating basic feasible solutions.

    A vertex of the transportation polytope has at most ``na + nb - 1``
    positive cells; every such cell subset is tried by solving the marginal
    equations exactly.
    """
    na, nb = cost.shape
    cells = [(i, j) for i in range(na) for j in range(nb)]
    A = np.zeros((na + nb, na * nb))
    for k, (i, j) in enumerate(cells):
        A[i, k] = 1.0
        A[na + j, k] = 1.0
    rhs = np.concatenate([a, b])
    best = np.inf
    m = na + nb - 1
    for S in itertools.combinations(range(na * nb), m):
        S = list(S)
        sub = A[:, S]
        if np.linalg.matrix_rank(sub) < m:
            continue
        x, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
        if np.any(x < -1e-12) or np.linalg.norm(sub @ x - rhs) > 1e-10:
            continue
        best = min(best, float(cost.reshape(-1)[S] @ x))
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


class ColumnFamily:
    """Kernel family whose parameters index the columns of a fixed matrix."""

    name = "columns"

    def __init__(self, M):
        self.M = np.asarray(M, dtype=float)

    @property
    def n_points(self):
        return self.M.shape[0]

    def design(self, params):
        if len(params) == 0:
            return np.zeros((self.n_points, 0))
        return self.M[:, list(params)]

    def is_duplicate(self, p, q):
        return p == q

    def default_dictionary(self):
        return list(range(self.M.shape[1]))

    def oracle(self, residual, augment=None, rng=None):
        F = self.M
        if augment is not None:
            F = np.vstack([F, np.full((1, F.shape[1]), augment)])
        return int(np.argmax(residual @ F / np.linalg.norm(F, axis=0)))


# -- acceptance report -------------------------------------------------------

ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)`` for the end-of-run report."""
    def record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
