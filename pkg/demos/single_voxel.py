"""Fit one simulated crossing-fascicle voxel with EBP, grid NNLS and DTI.

    python demos/single_voxel.py [seed]
"""
import sys

import numpy as np

from ebp.bench import FitConfig, fit_method
from ebp.metrics import evaluate
from ebp.simulate import SimulationConfig, generate


def main(seed=0):
    ds = generate(SimulationConfig(seed=seed))
    print("true fascicles (weight, axis, axial diffusivity):")
    for w, p in zip(ds.truth.model.weights, ds.truth.model.params):
        print(f"  {w:.3f}  {np.round(p.direction, 3)}  {p.axial:.2f}")

    cfg = FitConfig(seed=seed)
    for method in ("ebp", "nnls", "dti"):
        res = fit_method(method, ds, cfg, c=1.0)
        m = evaluate(res.model, ds)
        print(f"{method:>4}: K={res.model.n_components:2d}  "
              f"test RMSE={m['test_rmse']:.4f}  EMD={m['emd']:.4f}")
        if res.trace is not None:
            print(f"      stopped: {res.trace.stopping_reason} after "
                  f"{len(res.trace) - 1} iterations, best at "
                  f"{res.trace.best_iteration}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
