"""Comparison fitters: single-tensor DTI, grid NNLS and first-order CBP."""
from dataclasses import dataclass, field

import numpy as np

from .kernels import B_SCALE, TensorAngles
from .model import MixtureModel, RegularizationSpec, prune, transform
from .nnls import DEFAULT_TOL, NnlsProblem, nnls_solve

__all__ = [
    "DtiModel",
    "dti_fit",
    "grid_nnls_fit",
    "cross_validate_c",
    "FocbpDictionary",
    "focbp_build",
    "focbp_fit",
    "voronoi_intervals",
    "focbp_tensor_dictionary",
]


# -- DTI ---------------------------------------------------------------------

@dataclass
class DtiModel:
    """Single diffusion tensor (um^2/ms) with signal scale ``s0``."""

    tensor: np.ndarray
    s0: float
    b_value: float = 1000.0

    def __post_init__(self):
        D = np.asarray(self.tensor, dtype=float)
        D = 0.5 * (D + D.T)
        w, V = np.linalg.eigh(D)
        if np.any(w < -1e-9):
            # clamp small negative eigenvalues produced by noise
            D = (V * np.clip(w, 0.0, None)) @ V.T
            D = 0.5 * (D + D.T)
        self.tensor = D
        self.s0 = float(self.s0)

    @property
    def eigenvalues(self):
        """Eigenvalues in decreasing order."""
        return np.linalg.eigvalsh(self.tensor)[::-1]

    @property
    def principal_direction(self):
        w, V = np.linalg.eigh(self.tensor)
        return V[:, -1]

    @property
    def fractional_anisotropy(self):
        lam = self.eigenvalues
        den = np.sqrt(np.sum(lam ** 2))
        if den == 0:
            return 0.0
        return float(np.sqrt(1.5) * np.linalg.norm(lam - lam.mean()) / den)

    @property
    def n_components(self):
        return 1

    def predict(self, scheme):
        X = scheme.directions
        q = np.einsum("ij,jk,ik->i", X, self.tensor, X)
        return self.s0 * np.exp(-scheme.b_value * B_SCALE * q)

    def spikes(self):
        """fODF convention: one unit spike at the principal direction."""
        return self.principal_direction[None, :], np.ones(1)

    def to_dict(self):
        return {"tensor": self.tensor.tolist(), "s0": self.s0,
                "b": self.b_value}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["tensor"], dtype=float), d["s0"], d.get("b", 1000.0))


def _dti_design(X, b_value):
    bs = b_value * B_SCALE
    x, y, z = X[:, 0], X[:, 1], X[:, 2]
    return np.column_stack([-bs * x * x, -bs * y * y, -bs * z * z,
                            -2 * bs * x * y, -2 * bs * x * z, -2 * bs * y * z])


def dti_fit(scheme, signal):
    """Log-linear least-squares single-tensor fit.

    On a single shell of unit directions ``s0`` and the trace of the tensor
    are confounded (``x'x = 1``), so a gauge is fixed: ``s0 = 1``, the
    normalized-signal convention, unless that leaves the tensor with a
    negative eigenvalue, in which case the trace is shifted so the smallest
    eigenvalue is zero and ``s0`` absorbs the shift. Predictions do not
    depend on the gauge.

    Parameters
    ----------
    scheme : AcquisitionScheme
        At least six directions.
    signal : array
        Strictly positive measurements.

    Returns
    -------
    DtiModel
    """
    signal = np.asarray(signal, dtype=float)
    if len(scheme) < 6:
        raise ValueError("DTI needs at least 6 directions")
    if len(signal) != len(scheme):
        raise ValueError("signal length does not match the scheme")
    if not np.all(np.isfinite(signal)) or np.any(signal <= 0):
        raise ValueError("DTI needs strictly positive signal")
    A = _dti_design(scheme.directions, scheme.b_value)
    coef, *_ = np.linalg.lstsq(A, np.log(signal), rcond=None)
    dxx, dyy, dzz, dxy, dxz, dyz = coef
    D = np.array([[dxx, dxy, dxz], [dxy, dyy, dyz], [dxz, dyz, dzz]])
    shift = min(0.0, float(np.linalg.eigvalsh(D)[0]))
    D -= shift * np.eye(3)
    s0 = float(np.exp(-scheme.b_value * B_SCALE * shift))
    return DtiModel(D, s0, scheme.b_value)


# -- grid NNLS ---------------------------------------------------------------

def grid_nnls_fit(family, signal, grid, reg=None, tol=DEFAULT_TOL):
    """NNLS over a fixed dictionary of kernel parameters, pruned."""
    grid = list(grid)
    if not grid:
        raise ValueError("grid is empty")
    problem = transform(signal, family, reg)
    sol = nnls_solve(NnlsProblem(problem.lift(grid), problem.target, tol=tol))
    return prune(MixtureModel(sol.coefficients, grid, family))


def cross_validate_c(family, signal, grid, c_values=None, lam=1.0,
                     folds=5):
    """Choose the volume-anchor level ``c`` for grid NNLS by K-fold CV.

    Folds interleave the measurement indices (``i % folds``). Ties go to
    the smallest ``c``.

    Returns
    -------
    best_c : float
    scores : array
        Mean held-out MSE per candidate.
    """
    c_values = np.logspace(-1, 1, 8) if c_values is None else np.asarray(
        c_values, dtype=float)
    signal = np.asarray(signal, dtype=float)
    n = len(signal)
    if folds < 2 or folds > n:
        raise ValueError("need 2 <= folds <= number of measurements")
    grid = list(grid)
    idx = np.arange(n)
    scores = np.zeros(len(c_values))
    for k in range(folds):
        held = idx % folds == k
        fit_fam = family.rebind(_subset_points(family, ~held))
        test_fam = family.rebind(_subset_points(family, held))
        for j, c in enumerate(c_values):
            reg = RegularizationSpec("volume_anchor", lam, float(c))
            model = grid_nnls_fit(fit_fam, signal[~held], grid, reg)
            scores[j] += np.sum((signal[held] - model.predict(test_fam)) ** 2)
    scores /= n
    best = int(np.argmin(scores))
    return float(c_values[best]), scores


def _subset_points(family, mask):
    if hasattr(family, "scheme"):
        return family.scheme.subset(np.flatnonzero(mask))
    return family.abscissae[mask]


# -- first-order continuous basis pursuit --------------------------------------

def voronoi_intervals(points, bounds):
    """1-D Voronoi cells of sorted ``points`` clipped to ``bounds``."""
    points = np.asarray(points, dtype=float)
    if np.any(np.diff(points) <= 0):
        raise ValueError("grid points must be strictly increasing")
    mids = 0.5 * (points[1:] + points[:-1])
    lo = np.concatenate([[bounds[0]], mids])
    hi = np.concatenate([mids, [bounds[1]]])
    return np.column_stack([lo, hi])


@dataclass
class FocbpDictionary:
    """Vertex-expanded first-order dictionary.

    Column ``k`` of ``Z`` belongs to grid cell ``owner[k]`` and approximates
    the kernel at vertex ``vertices[k]`` by a first-order Taylor expansion
    about that cell's grid point.
    """

    family: object
    centers: np.ndarray
    vertices: np.ndarray
    owner: np.ndarray
    Z: np.ndarray
    cells: list = field(default_factory=list)

    @property
    def n_cells(self):
        return len(self.centers)


def focbp_build(family, axes, bounds, shrink=1.0):
    """Build the FOCBP dictionary on a product grid with box cells.

    Parameters
    ----------
    family : object
        Box-coordinate family with ``vector(theta)`` and ``jacobian(theta)``
        (``BumpKernel`` or ``TensorAngles``).
    axes : list of 1-D arrays
        Grid coordinates per parameter dimension.
    bounds : list of (lo, hi)
        Parameter box; outer cells are clipped to it.
    shrink : float in [0, 1]
        Scales every cell about its grid point; 0 collapses the cells and
        reproduces plain grid NNLS.
    """
    if not (hasattr(family, "vector") and hasattr(family, "jacobian")):
        raise TypeError("family must provide vector() and jacobian()")
    if not 0 <= shrink <= 1:
        raise ValueError("shrink must lie in [0, 1]")
    axes = [np.asarray(a, dtype=float).reshape(-1) for a in axes]
    if len(bounds) != len(axes):
        raise ValueError("one (lo, hi) bound per axis is required")
    per_axis = []
    for a, bnd in zip(axes, bounds):
        cells = voronoi_intervals(a, bnd)
        per_axis.append(a[:, None] + shrink * (cells - a[:, None]))

    mesh = np.meshgrid(*[np.arange(len(a)) for a in axes], indexing="ij")
    index = np.column_stack([m.reshape(-1) for m in mesh])
    corners = np.array(np.meshgrid(*[[0, 1]] * len(axes), indexing="ij")
                       ).reshape(len(axes), -1).T

    centers, verts, owner, cols, cells = [], [], [], [], []
    for i, ix in enumerate(index):
        theta = np.array([axes[d][ix[d]] for d in range(len(axes))])
        box = np.array([per_axis[d][ix[d]] for d in range(len(axes))])
        f = family.vector(theta)
        J = family.jacobian(theta)
        cell_verts = box[np.arange(len(axes)), corners]
        # a collapsed cell contributes one column, not 2^D copies
        cell_verts = np.unique(cell_verts, axis=0)
        centers.append(theta)
        cells.append(box)
        for v in cell_verts:
            verts.append(v)
            owner.append(i)
            cols.append(f + J @ (v - theta))
    return FocbpDictionary(family=family, centers=np.array(centers),
                           vertices=np.array(verts),
                           owner=np.array(owner, dtype=int),
                           Z=np.column_stack(cols), cells=cells)


def focbp_fit(dictionary, signal, reg=None, tol=DEFAULT_TOL):
    """Solve FOCBP as NNLS over the vertex columns and recover the mixture.

    A cell with total mass ``s = sum_j g_j > 0`` yields one component with
    weight ``s`` and parameter ``sum_j g_j v_j / s``.
    """
    reg = RegularizationSpec() if reg is None else reg
    y = np.asarray(signal, dtype=float)
    Z = dictionary.Z
    if len(y) != Z.shape[0]:
        raise ValueError("signal length does not match the dictionary")
    if reg.augment is not None:
        Z = np.vstack([Z, np.full((1, Z.shape[1]), reg.augment)])
        y = np.append(y, reg.target_entry)
    gamma = nnls_solve(NnlsProblem(Z, y, tol=tol)).coefficients

    fam = dictionary.family
    weights, params = [], []
    for i in range(dictionary.n_cells):
        sel = dictionary.owner == i
        g = gamma[sel]
        s = g.sum()
        if s > 0:
            theta = (g / s) @ dictionary.vertices[sel]
            weights.append(s)
            params.append(fam.from_array(theta))
    base = getattr(fam, "kernel", fam)
    return MixtureModel(weights, params, base)



def focbp_tensor_dictionary(kernel, n_polar=9, n_azimuth=18,
                            axials=(0.5, 1.0, 1.5, 2.0), shrink=1.0):
    """FOCBP dictionary for the tensor family in (polar, azimuth, axial).

    Axes cover one hemisphere; cells are boxes in those coordinates, so
    they are distorted near the pole (radial diffusivity is fixed at 0).
    """
    polar = (np.arange(n_polar) + 0.5) * (0.5 * np.pi / n_polar)
    azimuth = -np.pi + (np.arange(n_azimuth) + 0.5) * (2 * np.pi / n_azimuth)
    axials = np.asarray(axials, dtype=float)
    lo, hi = kernel.axial_range
    return focbp_build(TensorAngles(kernel), [polar, azimuth, axials],
                       [(0.0, 0.5 * np.pi), (-np.pi, np.pi), (lo, hi)],
                       shrink)
