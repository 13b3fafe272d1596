"""Elastic basis pursuit for nonparametric mixture models."""
from .baselines import (DtiModel, FocbpDictionary, cross_validate_c,
                        dti_fit, focbp_build, focbp_fit, grid_nnls_fit)
from .engine import (ConvergenceDiagnostics, FitTrace, OracleSpec,
                     StoppingConfig, diagnostics, ebp_fit, initialize)
from .kernels import (AcquisitionScheme, Bump1dParams, BumpKernel,
                      TensorKernel, TensorParams, tensor_kernel_eval,
                      tensor_kernel_grad)
from .metrics import DiscreteFodf, emd, evaluate, rmse
from .model import (MixtureModel, RegularizationSpec, TransformedProblem,
                    prune, transform)
from .nnls import (NnlsIterationError, NnlsProblem, NnlsSolution,
                   kkt_violation, nnls_solve, nnls_solve_warm)
from .simulate import (Dataset, GroundTruth, SimulationConfig, generate,
                       make_directions, partition)

__version__ = "0.1.0"
