"""Grid NNLS versus first-order CBP on a single off-grid Gaussian bump."""
import numpy as np

from ebp.baselines import focbp_build, focbp_fit, grid_nnls_fit
from ebp.kernels import Bump1dParams, BumpKernel
from ebp.engine import ebp_fit
from ebp.model import transform

family = BumpKernel(np.linspace(0, 10, 101), width=0.7, interval=(0, 10))
grid = np.arange(0.5, 10, 1.0)
center = 4.8
y = family.evaluate(Bump1dParams(center))

fits = {
    "grid nnls": grid_nnls_fit(family, y, [Bump1dParams(c) for c in grid]),
    "focbp": focbp_fit(focbp_build(family, [grid], [(0, 10)]), y),
    "ebp": ebp_fit(transform(y, family), seed=0)[0],
}
for name, model in fits.items():
    spikes = ", ".join(f"{p.center:.4f} ({w:.3f})"
                       for w, p in zip(model.weights, model.params))
    print(f"{name:>9}: {spikes}")
