"""Track the EBP path on a noiseless two-fascicle signal.

Prints the iteration trace and the gap against the 1/sqrt(m) envelope
fitted on the first ten iterations.
"""
import numpy as np

from ebp.engine import StoppingConfig, ebp_fit, upper_envelope
from ebp.kernels import AcquisitionScheme, TensorKernel, TensorParams
from ebp.model import transform
from ebp.simulate import make_directions

family = TensorKernel(AcquisitionScheme(make_directions(75, 0), 1000.0))
truth = [TensorParams([1, 0, 0], 1.6, 0.0), TensorParams([0, 0.6, 0.8], 1.1, 0.0)]
y = family.design(truth) @ [0.7, 0.5]

model, trace = ebp_fit(transform(y, family), seed=0,
                       stop=StoppingConfig(max_iterations=30,
                                           early_stopping=False))
gaps = trace.objective
m = trace.column("iteration")
C = upper_envelope(gaps[m <= 10], m[m <= 10])
print("iteration,K,objective,envelope")
for it, k, g in zip(m, trace.column("n_active"), gaps):
    env = C / np.sqrt(it) if it >= 1 else float("nan")
    print(f"{int(it)},{int(k)},{g:.3e},{env:.3e}")
print(f"stopping reason: {trace.stopping_reason}, K = {model.n_components}")
