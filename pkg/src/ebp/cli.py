"""Command-line interface: ``ebp simulate | fit | evaluate | bench | directions``."""
import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys
from dataclasses import asdict

import numpy as np

from .baselines import focbp_fit, focbp_tensor_dictionary
from .bench import (METHODS, FitConfig, bench_csv, choose_c, fit_method,
                    run_bench)
from .io import (library_version, load_model, save_model, write_json,
                 write_manifest)
from .kernels import TensorKernel
from .metrics import evaluate
from .simulate import SimulationConfig, generate, load_dataset, save_dataset
from .sphere import electrostatic_directions

log = logging.getLogger("ebp")

FIT_METHODS = ("ebp", "nnls", "dti", "cbp")


class CliError(Exception):
    pass


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _add_sim_flags(p):
    p.add_argument("--fascicles", type=_positive_int, default=3)
    p.add_argument("--directions", type=int, default=150)
    p.add_argument("--b", type=float, default=1000.0)
    p.add_argument("--sigma2", type=_nonneg_float, default=0.005)
    p.add_argument("--isotropic-weight", type=_nonneg_float, default=0.0)
    p.add_argument("--directions-seed", type=int, default=0)


def _sim_config(args, seed):
    if args.directions < 2:
        raise CliError("--directions must be >= 2")
    if not args.b > 0:
        raise CliError("--b must be positive")
    return SimulationConfig(n_directions=args.directions, b_value=args.b,
                            n_fascicles=args.fascicles,
                            noise_sigma2=args.sigma2,
                            isotropic_weight=args.isotropic_weight,
                            seed=seed, directions_seed=args.directions_seed)


def _add_fit_flags(p):
    p.add_argument("--lambda", dest="lam", type=_nonneg_float, default=1.0)
    p.add_argument("--c", type=_nonneg_float, default=None,
                   help="volume-anchor level (default 1, or CV with --cv-c)")
    p.add_argument("--cv-c", action="store_true",
                   help="choose c by 5-fold CV of grid NNLS")
    p.add_argument("--restarts", type=_positive_int, default=10)
    p.add_argument("--grid-size", type=_positive_int, default=6,
                   help="geodesic frequency of the NNLS direction grid")
    p.add_argument("--max-iters", type=_positive_int, default=50)
    p.add_argument("--no-early-stopping", action="store_true")
    p.add_argument("--pin-radial", action="store_true",
                   help="fix the radial diffusivity at 0 in the EBP oracle")


def _fit_config(args, seed, cv_default):
    return FitConfig(lam=args.lam, c=args.c,
                     cv_c=args.cv_c or (cv_default and args.c is None),
                     grid_frequency=args.grid_size, restarts=args.restarts,
                     max_iterations=args.max_iters,
                     early_stopping=not args.no_early_stopping,
                     fit_radial=not args.pin_radial, seed=seed)


# -- commands ----------------------------------------------------------------

def cmd_simulate(args):
    started = _now()
    cfg = _sim_config(args, args.seed)
    ds = generate(cfg)
    save_dataset(ds, args.out)
    write_manifest(args.out, "simulate", asdict(cfg), args.seed,
                   started=started)
    return 0


def cmd_fit(args):
    started = _now()
    try:
        ds = load_dataset(args.input)
    except (OSError, ValueError, json.JSONDecodeError) as err:
        raise CliError(f"cannot read dataset {args.input}: {err}") from err
    cfg = _fit_config(args, args.seed, cv_default=False)
    extra = {}
    trace_path = None
    if args.method == "cbp":
        scheme = ds.scheme.subset(ds.train)
        kernel = TensorKernel(scheme)
        y = ds.signal[ds.train]
        c = choose_c(kernel, y, cfg)
        d = focbp_tensor_dictionary(kernel)
        model = focbp_fit(d, y, cfg.regularization(c))
        extra.update({"lambda": cfg.lam, "c": c})
    else:
        if args.method == "dti" and np.any(ds.signal[ds.train] <= 0):
            raise CliError("dti needs strictly positive signal")
        res = fit_method(args.method, ds, cfg)
        model = res.model
        if res.c is not None:
            extra.update({"lambda": cfg.lam, "c": res.c})
        if res.trace is not None:
            extra["stopping_reason"] = res.trace.stopping_reason
            extra["best_iteration"] = res.trace.best_iteration
            trace_path = args.trace or _sibling(args.out, ".trace.csv")
            with open(trace_path, "w", newline="") as fh:
                res.trace.to_csv(fh)
    save_model(model, args.method, args.out, extra)
    outputs = [args.out] + ([trace_path] if trace_path else [])
    write_manifest(args.out, "fit", asdict(cfg), args.seed, outputs=outputs,
                   extra={"method": args.method, "input": args.input},
                   started=started)
    return 0


def _sibling(path, suffix):
    root, ext = os.path.splitext(path)
    return root + suffix


def cmd_evaluate(args):
    try:
        ds = load_dataset(args.dataset)
        model = load_model(args.model, ds.scheme)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as err:
        raise CliError(f"cannot read inputs: {err}") from err
    metrics = {"version": "1.0"}
    metrics.update(evaluate(model, ds))
    text = json.dumps(metrics, indent=1) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        write_manifest(args.out, "evaluate",
                       {"model": args.model, "dataset": args.dataset})
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args):
    started = _now()
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise CliError(f"unknown methods {bad}; choose from {METHODS}")
    if args.jobs < 1:
        raise CliError("--jobs must be >= 1")
    sim = _sim_config(args, 0)
    cfg = _fit_config(args, 0, cv_default=True)
    rows = run_bench(args.trials, args.seed, methods, sim, cfg, args.jobs)

    os.makedirs(args.out_dir, exist_ok=True)
    trial_dir = os.path.join(args.out_dir, "trials")
    os.makedirs(trial_dir, exist_ok=True)
    for t in range(args.trials):
        part = [r for r in rows if r["trial"] == t]
        path = os.path.join(trial_dir, f"trial_{t:04d}.csv")
        with open(path, "w") as fh:
            fh.write(_rows_only(part, methods))
    out = os.path.join(args.out_dir, "bench.csv")
    with open(out, "w") as fh:
        fh.write(bench_csv(rows, methods))
    timing = os.path.join(args.out_dir, "timing.csv")
    with open(timing, "w") as fh:
        fh.write(bench_csv(rows, methods, timing=True))
    n_failed = sum(r["status"] != "ok" for r in rows)
    write_manifest(out, "bench",
                   {"simulation": asdict(sim), "fit": asdict(cfg),
                    "trials": args.trials, "methods": list(methods),
                    "jobs": args.jobs},
                   args.seed, outputs=[out, timing, trial_dir],
                   extra={"failed_rows": n_failed}, started=started)
    if n_failed > 0.1 * len(rows):
        log.error("%d of %d rows failed", n_failed, len(rows))
        return 1
    return 0


def _rows_only(rows, methods):
    text = bench_csv(rows, methods)
    lines = text.splitlines()
    return "\n".join(lines[:1 + len(rows)]) + "\n"


def cmd_directions(args):
    if args.n < 2:
        raise CliError("--n must be >= 2")
    points, energy = electrostatic_directions(args.n, args.seed)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "z"])
        for p in points:
            w.writerow([repr(float(x)) for x in p])
    write_manifest(args.out, "directions", {"n": args.n}, args.seed,
                   extra={"energy": energy})
    return 0


# -- entry point ---------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="ebp", description="Elastic basis pursuit for mixture models.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {library_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one crossing-fascicle voxel")
    _add_sim_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a model to a dataset's training set")
    p.add_argument("--method", choices=FIT_METHODS, required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None,
                   help="trace CSV path for ebp (default <out>.trace.csv)")
    p.add_argument("--seed", type=int, default=0)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="RMSE and EMD of a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="seeded comparison over many trials")
    p.add_argument("--trials", type=_positive_int, default=100)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    _add_sim_flags(p)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("directions", help="electrostatic direction set")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_directions)
    return parser


def _configure_logging():
    level = os.environ.get("EBP_LOG", "error").upper()
    if level not in ("ERROR", "INFO", "DEBUG"):
        level = "ERROR"
    logging.basicConfig(level=getattr(logging, level),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(f"ebp {args.command}: {err}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as err:
        print(f"ebp {args.command}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
