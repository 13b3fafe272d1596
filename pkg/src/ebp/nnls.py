"""Active-set nonnegative least squares (Lawson-Hanson).

Solves ``minimize ||y - X beta||^2 subject to beta >= 0``. The solver is the
inner engine for every fitter in the package: grid NNLS, first-order CBP and
the weight refit inside elastic basis pursuit.

The dual test is normalized by column norms, so the stopping rule is
invariant to rescaling individual columns::

    max_j  X_j^T r / ||X_j||  <=  tol * max(1, ||r||)

"""
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NnlsProblem",
    "NnlsSolution",
    "NnlsIterationError",
    "nnls_solve",
    "nnls_solve_warm",
    "kkt_violation",
]

DEFAULT_TOL = 1e-10


class NnlsIterationError(RuntimeError):
    """Raised when the outer-iteration safety cap is exceeded.

    The best solution found so far is attached as ``solution``.
    """

    def __init__(self, message, solution):
        super().__init__(message)
        self.solution = solution


@dataclass
class NnlsProblem:
    """Design matrix, target and dual tolerance.

    Parameters
    ----------
    design : (n, p) array
        Column ``j`` is the evaluated kernel vector of candidate ``j``.
    target : (n,) array
    tol : float
        Relative tolerance for the normalized dual test.
    """

    design: np.ndarray
    target: np.ndarray
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        self.design = np.asarray(self.design, dtype=float)
        self.target = np.asarray(self.target, dtype=float)
        if self.design.ndim != 2:
            raise ValueError("design must be a 2-D array")
        n, p = self.design.shape
        if n < 1 or p < 1:
            raise ValueError("design must have at least one row and column")
        if self.target.shape != (n,):
            raise ValueError(
                f"target has shape {self.target.shape}, expected ({n},)")
        if not (np.all(np.isfinite(self.design))
                and np.all(np.isfinite(self.target))):
            raise ValueError("design and target must be finite")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass
class NnlsSolution:
    coefficients: np.ndarray
    active_set: np.ndarray
    residual: np.ndarray
    objective: float
    n_iterations: int = 0
    n_set_changes: int = 0
    column_norms: np.ndarray = field(default=None, repr=False)


def _column_norms(X):
    norms = np.sqrt(np.einsum("ij,ij->j", X, X))
    # zero columns can never enter; give them unit norm for the dual test
    norms[norms == 0] = 1.0
    return norms


def _least_squares(X, y, passive):
    s = np.zeros(X.shape[1])
    if passive.any():
        s[passive] = np.linalg.lstsq(X[:, passive], y, rcond=None)[0]
    return s


def _pack(X, y, beta, norms, n_iter, n_changes):
    residual = y - X @ beta
    return NnlsSolution(
        coefficients=beta,
        active_set=np.flatnonzero(beta > 0),
        residual=residual,
        objective=float(residual @ residual),
        n_iterations=n_iter,
        n_set_changes=n_changes,
        column_norms=norms,
    )


def _feasible_start(X, y, passive):
    """Shrink a warm passive set until its LS solution is strictly positive."""
    n_changes = 0
    while passive.any():
        s = _least_squares(X, y, passive)
        bad = passive & (s <= 0)
        if not bad.any():
            return s, passive, n_changes
        # drop the most negative coefficient first; one at a time keeps the
        # remaining subproblem as large as possible
        idx = np.flatnonzero(bad)
        worst = idx[np.argmin(s[idx])]
        passive[worst] = False
        n_changes += 1
    return np.zeros(X.shape[1]), passive, n_changes


def _lawson_hanson(problem, passive, max_iter):
    X, y, tol = problem.design, problem.target, problem.tol
    p = X.shape[1]
    norms = _column_norms(X)

    beta, passive, n_changes = _feasible_start(X, y, passive)
    n_iter = 0

    while True:
        residual = y - X @ beta
        dual = (X.T @ residual) / norms
        threshold = tol * max(1.0, float(np.linalg.norm(residual)))
        candidates = ~passive & (dual > threshold)
        if not candidates.any():
            break
        if n_iter >= max_iter:
            raise NnlsIterationError(
                f"NNLS exceeded {max_iter} outer iterations",
                _pack(X, y, beta, norms, n_iter, n_changes))
        n_iter += 1

        # largest dual violation, smallest index on ties; a column whose LS
        # coefficient comes out nonpositive (roundoff) is skipped for this pass
        entered = False
        masked = np.where(candidates, dual, -np.inf)
        while np.isfinite(masked.max()):
            j = int(np.argmax(masked))
            trial = passive.copy()
            trial[j] = True
            s = _least_squares(X, y, trial)
            if s[j] > 0:
                passive = trial
                entered = True
                break
            masked[j] = -np.inf
        if not entered:
            break
        n_changes += 1

        # inner loop: step back toward feasibility while any passive
        # coefficient is nonpositive
        while np.any(s[passive] <= 0):
            bad = passive & (s <= 0)
            ratio = beta[bad] / (beta[bad] - s[bad])
            alpha = float(np.min(ratio))
            beta = beta + alpha * (s - beta)
            leaving = passive & (beta <= 0)
            leaving[np.flatnonzero(bad)[np.argmin(ratio)]] = True
            passive &= ~leaving
            beta[~passive] = 0.0
            n_changes += int(leaving.sum())
            s = _least_squares(X, y, passive)
        beta = s

    beta = np.where(passive, beta, 0.0)
    return _pack(X, y, beta, norms, n_iter, n_changes)


def nnls_solve(problem, max_iter=None):
    """Solve a nonnegative least-squares problem from a cold start.

    Parameters
    ----------
    problem : NnlsProblem
    max_iter : int, optional
        Safety cap on outer iterations. Default ``10 * p``.

    Returns
    -------
    NnlsSolution

    Raises
    ------
    NnlsIterationError
        If the cap is exceeded; the exception carries the best-so-far
        solution.
    """
    p = problem.design.shape[1]
    if max_iter is None:
        max_iter = 10 * p
    return _lawson_hanson(problem, np.zeros(p, dtype=bool), max_iter)


def nnls_solve_warm(problem, warm_active, max_iter=None):
    """Solve from an initial guess of the active set.

    The warm set is first reduced to a subset whose unconstrained LS fit is
    strictly positive; Lawson-Hanson then proceeds from that feasible point.
    The returned objective does not depend on ``warm_active``.
    """
    p = problem.design.shape[1]
    passive = np.zeros(p, dtype=bool)
    warm = np.asarray(list(warm_active), dtype=int)
    if warm.size:
        if warm.min() < 0 or warm.max() >= p:
            raise ValueError("warm_active indices out of range")
        passive[warm] = True
    if max_iter is None:
        max_iter = 10 * p
    return _lawson_hanson(problem, passive, max_iter)


def kkt_violation(problem, solution):
    """Largest KKT violation, scaled so that ``<= tol`` means satisfied.

    Active columns must have zero normalized dual; inactive ones a
    nonpositive dual.
    """
    X = problem.design
    norms = _column_norms(X)
    r = solution.residual
    scale = max(1.0, float(np.linalg.norm(r)))
    dual = (X.T @ r) / norms / scale
    active = np.zeros(X.shape[1], dtype=bool)
    active[solution.active_set] = True
    worst = 0.0
    if active.any():
        worst = max(worst, float(np.max(np.abs(dual[active]))))
    if (~active).any():
        worst = max(worst, float(np.max(dual[~active])))
    return worst
