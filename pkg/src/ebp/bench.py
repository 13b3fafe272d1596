"""Seeded simulation trials comparing the fitters, and their aggregation."""
import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from time import perf_counter

import numpy as np

from .baselines import cross_validate_c, dti_fit, grid_nnls_fit
from .engine import OracleSpec, StoppingConfig, ebp_fit
from .kernels import TensorKernel
from .metrics import evaluate
from .model import RegularizationSpec, transform
from .simulate import SimulationConfig, generate

__all__ = ["FitConfig", "fit_method", "run_trial", "run_bench",
           "bench_csv", "METHODS", "BENCH_COLUMNS"]

log = logging.getLogger(__name__)

METHODS = ("ebp", "nnls", "dti")
BENCH_COLUMNS = ("trial", "method", "train_rmse", "test_rmse", "emd",
                 "K_final", "iterations", "wall_ms")


@dataclass
class FitConfig:
    """Settings shared by the fitters in a benchmark or a single fit."""

    lam: float = 1.0
    c: float = None
    cv_c: bool = True
    c_grid: tuple = tuple(np.logspace(-1, 1, 8).tolist())
    cv_folds: int = 5
    grid_frequency: int = 6
    grid_axials: tuple = (0.5, 1.0, 1.5, 2.0)
    restarts: int = 10
    max_iterations: int = 50
    early_stopping: bool = True
    patience: int = 5
    fit_radial: bool = True
    seed: int = 0

    def regularization(self, c):
        if self.lam == 0:
            return RegularizationSpec()
        return RegularizationSpec("volume_anchor", self.lam, float(c))


@dataclass
class FitResult:
    method: str
    model: object
    trace: object = None
    c: float = None
    iterations: int = 0
    wall_ms: float = 0.0
    extra: dict = field(default_factory=dict)


def choose_c(family, signal, cfg):
    """Fixed ``c`` if configured, else cross-validated grid NNLS."""
    if cfg.c is not None or not cfg.cv_c or cfg.lam == 0:
        return 1.0 if cfg.c is None else float(cfg.c)
    grid = family.grid(cfg.grid_frequency, cfg.grid_axials)
    best, _ = cross_validate_c(family, signal, grid, cfg.c_grid, cfg.lam,
                               cfg.cv_folds)
    return best


def fit_method(method, dataset, cfg=None, c=None):
    """Fit one method on the training partition of ``dataset``.

    Early stopping for EBP holds out the test partition as validation set,
    mirroring the iteration-wise prediction error used to stop the loop.
    """
    cfg = FitConfig() if cfg is None else cfg
    t0 = perf_counter()
    train = dataset.train
    scheme_tr = dataset.scheme.subset(train)
    y_tr = dataset.signal[train]
    if method == "dti":
        model = dti_fit(scheme_tr, y_tr)
        return FitResult("dti", model, iterations=0,
                         wall_ms=(perf_counter() - t0) * 1e3)

    family = TensorKernel(scheme_tr, restarts=cfg.restarts,
                          fit_radial=cfg.fit_radial)
    if c is None:
        c = choose_c(family, y_tr, cfg)
    reg = cfg.regularization(c)
    if method == "nnls":
        grid = family.grid(cfg.grid_frequency, cfg.grid_axials)
        model = grid_nnls_fit(family, y_tr, grid, reg)
        return FitResult("nnls", model, c=c, iterations=0,
                         wall_ms=(perf_counter() - t0) * 1e3)
    if method == "ebp":
        problem = transform(y_tr, family, reg)
        validation = None
        if cfg.early_stopping:
            test = dataset.test
            validation = (family.rebind(dataset.scheme.subset(test)),
                          dataset.signal[test])
        stop = StoppingConfig(max_iterations=cfg.max_iterations,
                              early_stopping=cfg.early_stopping,
                              patience=cfg.patience)
        model, trace = ebp_fit(problem, OracleSpec(restarts=cfg.restarts),
                               validation=validation, stop=stop,
                               seed=cfg.seed)
        return FitResult("ebp", model, trace=trace, c=c,
                         iterations=trace.records[-1].iteration,
                         wall_ms=(perf_counter() - t0) * 1e3)
    raise ValueError(f"unknown method {method!r}")


def run_trial(trial, seed=0, methods=METHODS, sim=None, cfg=None):
    """Simulate trial ``trial`` (seed ``seed + trial``) and fit each method.

    Returns a list of row dicts keyed by :data:`BENCH_COLUMNS`.
    """
    sim = SimulationConfig() if sim is None else sim
    cfg = FitConfig() if cfg is None else cfg
    s = seed + trial
    sim = replace(sim, seed=s)
    cfg = replace(cfg, seed=s)
    dataset = generate(sim)
    rows = []
    c = None
    for method in methods:
        try:
            if method in ("ebp", "nnls") and c is None:
                # one cross-validated c shared by both
                fam = TensorKernel(dataset.scheme.subset(dataset.train))
                c = choose_c(fam, dataset.signal[dataset.train], cfg)
            res = fit_method(method, dataset, cfg, c=c)
            metrics = evaluate(res.model, dataset)
            rows.append({"trial": trial, "method": method,
                         "train_rmse": metrics["train_rmse"],
                         "test_rmse": metrics["test_rmse"],
                         "emd": metrics.get("emd", math.nan),
                         "K_final": res.model.n_components,
                         "iterations": res.iterations,
                         "wall_ms": res.wall_ms, "status": "ok"})
        except Exception as err:  # noqa: BLE001 - a failed trial is a row
            log.warning("trial %d method %s failed: %s", trial, method, err)
            rows.append({"trial": trial, "method": method,
                         "train_rmse": math.nan, "test_rmse": math.nan,
                         "emd": math.nan, "K_final": 0, "iterations": 0,
                         "wall_ms": math.nan, "status": "failed"})
    return rows


def _trial_job(args):
    trial, seed, methods, sim, cfg = args
    from threadpoolctl import threadpool_limits
    with threadpool_limits(1):
        return run_trial(trial, seed, methods, sim, cfg)


def run_bench(trials, seed=0, methods=METHODS, sim=None, cfg=None, jobs=1):
    """Run ``trials`` seeded trials, optionally across ``jobs`` processes.

    Rows come back ordered by trial index and then method, whatever the
    scheduling.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    args = [(t, seed, tuple(methods), sim, cfg) for t in range(trials)]
    if jobs <= 1:
        results = [_trial_job(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trial_job, args))
    return [row for rows in results for row in rows]


def summarize(rows, methods):
    """Mean and sample standard deviation per method over successful rows."""
    out = []
    for method in methods:
        ok = [r for r in rows if r["method"] == method and r["status"] == "ok"]
        for stat in ("mean", "sd"):
            row = {"trial": stat, "method": method}
            for col in ("train_rmse", "test_rmse", "emd", "K_final",
                        "iterations"):
                vals = np.array([r[col] for r in ok], dtype=float)
                vals = vals[np.isfinite(vals)]
                if len(vals) == 0:
                    row[col] = math.nan
                elif stat == "mean":
                    row[col] = float(np.mean(vals))
                else:
                    row[col] = float(np.std(vals, ddof=1)) if len(vals) > 1 \
                        else 0.0
            row["wall_ms"] = math.nan
            row["status"] = f"n={len(ok)}"
            out.append(row)
    return out


def _cell(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def bench_csv(rows, methods, timing=False):
    """Per-trial rows then summary rows as CSV text.

    Wall times vary between runs, so they are written only when ``timing``
    is set; without them the text is a deterministic function of the seed.
    """
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    cols = list(BENCH_COLUMNS) + ["status"]
    writer.writerow(cols)
    for row in list(rows) + summarize(rows, methods):
        vals = dict(row)
        if not timing:
            vals["wall_ms"] = math.nan
        writer.writerow([_cell(vals[c]) for c in cols])
    return out.getvalue()
