"""Elastic basis pursuit: grow, refit and prune over a continuous dictionary.

Each iteration asks an oracle for the kernel most correlated with the
current residual, refits every weight by nonnegative least squares and
removes components whose weight dropped to zero. The loop is a
continuous-dictionary generalization of the Lawson-Hanson active-set method.
"""
import copy
import csv
import io
import logging
import math
from dataclasses import dataclass, field
from time import perf_counter
from typing import Callable, Optional

import numpy as np

from .model import MixtureModel, TransformedProblem, prune, transform
from .nnls import (DEFAULT_TOL, NnlsIterationError, NnlsProblem, nnls_solve,
                   nnls_solve_warm)

__all__ = [
    "OracleSpec",
    "StoppingConfig",
    "IterationRecord",
    "FitTrace",
    "ConvergenceDiagnostics",
    "initialize",
    "ebp_fit",
    "diagnostics",
    "fit_envelope",
    "upper_envelope",
    "transform",
    "prune",
]

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("iteration", "K", "train_mse", "valid_mse", "rho_hat",
                 "wall_ms")


@dataclass
class OracleSpec:
    """How new kernel parameters are proposed.

    ``oracle(residual, augment, rng)`` must return kernel parameters; when
    omitted the family's own oracle is used. ``alpha`` is the assumed
    approximation quality, it is only used by diagnostics.
    """

    oracle: Optional[Callable] = None
    alpha: float = 0.95
    restarts: Optional[int] = None
    stochastic: bool = True

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.restarts is not None and self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def bind(self, family):
        if self.oracle is not None:
            return self.oracle
        if self.restarts is not None and hasattr(family, "restarts"):
            family = copy.copy(family)
            family.restarts = self.restarts
        return family.oracle


@dataclass
class StoppingConfig:
    max_iterations: int = 50
    early_stopping: bool = True
    patience: int = 5
    weight_floor: float = 0.0
    dual_tol: float = DEFAULT_TOL
    nnls_tol: float = DEFAULT_TOL
    residual_tol: float = 1e-8

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class IterationRecord:
    iteration: int
    n_active: int
    objective: float
    train_mse: float
    valid_mse: float
    rho_hat: float
    wall_ms: float
    orthogonality: float
    event: str = ""


@dataclass
class FitTrace:
    records: list = field(default_factory=list)
    stopping_reason: str = ""
    n_transformed: int = 0
    best_iteration: int = -1

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def objective(self):
        return self.column("objective")

    @property
    def rho_hat(self):
        return self.column("rho_hat")

    def to_csv(self, fh=None):
        """Write the trace as CSV; returns the text when ``fh`` is None."""
        out = io.StringIO() if fh is None else fh
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in self.records:
            writer.writerow([r.iteration, r.n_active, _fmt(r.train_mse),
                             _fmt(r.valid_mse), _fmt(r.rho_hat),
                             f"{r.wall_ms:.3f}"])
        if fh is None:
            return out.getvalue()


def _fmt(x):
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) \
        else repr(float(x))


@dataclass
class ConvergenceDiagnostics:
    """Runtime checks of the convergence theory along one trace.

    ``bound_slack[m] = ||r_ref||^2 + B* rho[m] - ||r[m]||^2`` must be
    nonnegative for the gap bound to hold; ``descent_slack[m]`` is the
    per-step decrease minus ``(alpha rho[m])^2``.
    """

    B_star: Optional[float]
    reference_objective: Optional[float]
    gap_bound_series: np.ndarray
    bound_slack: np.ndarray
    descent_slack: np.ndarray
    gaps: np.ndarray
    envelope_constant: float

    @property
    def bound_holds(self):
        s = self.bound_slack[~np.isnan(self.bound_slack)]
        return bool(np.all(s >= 0))

    @property
    def descent_holds(self):
        s = self.descent_slack[~np.isnan(self.descent_slack)]
        return bool(np.all(s >= 0))


def _orthogonality(residual, F):
    rn = np.linalg.norm(residual)
    if F.shape[1] == 0 or rn == 0:
        return 0.0
    fn = np.linalg.norm(F, axis=0)
    return float(np.max(np.abs(residual @ F) / (rn * fn)))


def _refit(problem, params, warm, tol):
    F = problem.lift(params)
    nnls = NnlsProblem(F, problem.target, tol=tol)
    try:
        sol = nnls_solve_warm(nnls, warm)
    except NnlsIterationError as err:
        log.warning("refit hit the NNLS iteration cap; using best-so-far")
        sol = err.solution
    return sol


def initialize(problem, seed_dictionary, weight_floor=0.0, tol=DEFAULT_TOL):
    """NNLS fit over a finite seed dictionary, pruned.

    Returns
    -------
    model : MixtureModel
    residual : ndarray
        Transformed residual ``y~ - F~ w`` of the pruned model.
    """
    seed_dictionary = list(seed_dictionary)
    if not seed_dictionary:
        raise ValueError("seed dictionary is empty")
    F = problem.lift(seed_dictionary)
    sol = nnls_solve(NnlsProblem(F, problem.target, tol=tol))
    model = prune(MixtureModel(sol.coefficients, seed_dictionary,
                               problem.family), weight_floor)
    residual = problem.target - problem.lift(model.params) @ model.weights
    return model, residual


def ebp_fit(problem, oracle=None, validation=None, stop=None,
            dictionary=None, seed=None):
    """Fit a mixture model by elastic basis pursuit.

    Parameters
    ----------
    problem : TransformedProblem
        Output of :func:`transform`.
    oracle : OracleSpec, optional
    validation : (family, signal), optional
        Held-out measurements used for the validation curve and, when
        ``stop.early_stopping`` is set, model selection.
    stop : StoppingConfig, optional
    dictionary : list, optional
        Seed dictionary for the NNLS initialization; defaults to the
        oracle's pick for the target followed by the family's
        ``default_dictionary()``.
    seed : int or Generator, optional
        Seeds the oracle's random restarts.

    Returns
    -------
    model : MixtureModel
    trace : FitTrace
    """
    stop = StoppingConfig() if stop is None else stop
    oracle = OracleSpec() if oracle is None else oracle
    rng = np.random.default_rng(seed)
    family = problem.family
    propose = oracle.bind(family)
    t0 = perf_counter()

    if dictionary is None:
        # the oracle's answer for the raw signal joins the coarse seed set;
        # without it a coarse fit can bury a kernel that matches y exactly
        try:
            first = [propose(problem.target, problem.augment, rng)]
        except (ValueError, FloatingPointError):
            first = []
        dictionary = first + list(family.default_dictionary())
    model, residual = initialize(problem, dictionary, stop.weight_floor,
                                 stop.nnls_tol)

    trace = FitTrace(n_transformed=problem.n)

    def record(m, model, residual, event=""):
        F = problem.lift(model.params)
        valid = math.nan
        if validation is not None:
            vfam, vy = validation
            valid = float(np.mean((np.asarray(vy) - model.predict(vfam)) ** 2))
        obj = float(residual @ residual)
        trace.records.append(IterationRecord(
            iteration=m, n_active=model.n_components, objective=obj,
            train_mse=obj / problem.n,
            valid_mse=valid, rho_hat=math.nan,
            wall_ms=(perf_counter() - t0) * 1e3,
            orthogonality=_orthogonality(residual, F), event=event))

    record(0, model, residual)
    best = (trace.records[0].valid_mse, 0, model)
    reason = ""

    ynorm = float(np.linalg.norm(problem.target))
    for m in range(1, stop.max_iterations + 1):
        rnorm = float(np.linalg.norm(residual))
        if rnorm <= stop.residual_tol * ynorm:
            # the oracle cannot resolve correlations below round-off
            reason = "converged"
            break
        try:
            theta = propose(residual, problem.augment, rng)
            f_new = problem.lift_one(theta)
            if not np.all(np.isfinite(f_new)):
                raise FloatingPointError("non-finite kernel")
        except (ValueError, FloatingPointError) as err:
            log.warning("oracle failed at iteration %d: %s", m, err)
            reason = "oracle_failure"
            break
        rho = float(residual @ f_new / np.linalg.norm(f_new))
        trace.records[-1].rho_hat = rho
        if rho <= stop.dual_tol * max(1.0, rnorm):
            reason = "converged"
            break

        params = model.params + [theta]
        event = "add"
        dup = next((k for k, p in enumerate(model.params)
                    if family.is_duplicate(p, theta)), None)
        if dup is not None:
            # swap in the new parameter rather than adding a near-copy
            params = list(model.params)
            params[dup] = theta
            event = "merge"
        sol = _refit(problem, params, range(model.n_components),
                     stop.nnls_tol)
        current = float(residual @ residual)
        if dup is not None and sol.objective > current:
            reason = "stalled"
            break

        model = prune(MixtureModel(sol.coefficients, params, family),
                      stop.weight_floor)
        residual = problem.target - problem.lift(model.params) @ model.weights
        record(m, model, residual, event)

        valid = trace.records[-1].valid_mse
        if validation is not None and valid < best[0]:
            best = (valid, m, model)
        if (validation is not None and stop.early_stopping
                and m - best[1] >= stop.patience):
            reason = "early_stopping"
            break
    else:
        reason = "max_iterations"

    trace.stopping_reason = reason
    if validation is not None and stop.early_stopping:
        trace.best_iteration = best[1]
        model = best[2]
    else:
        trace.best_iteration = trace.records[-1].iteration
    log.debug("ebp stopped after %d iterations: %s", len(trace) - 1, reason)
    return model, trace


def fit_envelope(gaps, iterations=None):
    """Least-squares fit of ``log gap = log C - log(m) / 2``.

    Only iterations ``m >= 1`` with a positive gap enter the fit. Returns
    ``C`` (0 if nothing is fittable).
    """
    gaps = np.asarray(gaps, dtype=float)
    m = (np.arange(len(gaps)) if iterations is None
         else np.asarray(iterations, dtype=float))
    use = (m >= 1) & (gaps > 0) & np.isfinite(gaps)
    if not use.any():
        return 0.0
    return float(np.exp(np.mean(np.log(gaps[use]) + 0.5 * np.log(m[use]))))


def upper_envelope(gaps, iterations=None):
    """Smallest ``C`` with ``gap_m <= C / sqrt(m)`` on every given ``m >= 1``."""
    gaps = np.asarray(gaps, dtype=float)
    m = (np.arange(len(gaps)) if iterations is None
         else np.asarray(iterations, dtype=float))
    use = (m >= 1) & np.isfinite(gaps)
    if not use.any():
        return 0.0
    return float(max(0.0, np.max(gaps[use] * np.sqrt(m[use]))))


def diagnostics(trace, reference=None, problem=None, alpha=0.95,
                stochastic=True, rho=None):
    """Check the gap bound, per-step descent and the 1/sqrt(m) envelope.

    Parameters
    ----------
    trace : FitTrace
    reference : MixtureModel, optional
        A model standing in for the saturated optimum (e.g. the generating
        model on noiseless data). Requires ``problem`` to lift it.
    alpha : float
        Oracle quality; halved when ``stochastic``.
    rho : array, optional
        Per-iteration correlation estimates to use instead of the oracle's
        ``rho_hat`` (for example a dense-grid estimate).
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    obj = trace.objective
    rho = trace.rho_hat if rho is None else np.asarray(rho, dtype=float)
    iters = trace.column("iteration")

    B_star = ref_obj = None
    if reference is not None:
        if problem is None:
            raise ValueError("a reference model needs the problem to lift it")
        F = problem.lift(reference.params)
        B_star = float(2 * np.sum(reference.weights * np.linalg.norm(F, axis=0)))
        ref_obj = problem.objective(reference.weights, reference.params)
        bound = B_star * rho
        scale = max(1.0, float(obj[0]))
        slack = ref_obj + bound - obj + 1e-12 * scale
        gaps = obj - ref_obj
    else:
        bound = np.full(len(obj), np.nan)
        slack = np.full(len(obj), np.nan)
        gaps = obj - obj.min()

    a = alpha * (0.5 if stochastic else 1.0)
    descent = np.full(len(obj), np.nan)
    if len(obj) > 1:
        drop = obj[:-1] - obj[1:]
        descent[:-1] = drop - (a * rho[:-1]) ** 2 + 1e-12 * max(1.0, obj[0])

    return ConvergenceDiagnostics(
        B_star=B_star, reference_objective=ref_obj,
        gap_bound_series=bound, bound_slack=slack, descent_slack=descent,
        gaps=gaps, envelope_constant=fit_envelope(gaps, iters))
