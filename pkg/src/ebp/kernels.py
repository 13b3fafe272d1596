"""Kernel families and their oracles.

Two families are provided:

* :class:`TensorKernel` -- the Stejskal-Tanner signal of an axially
  symmetric diffusion tensor, ``f(x) = exp(-b x^T D x)`` with
  ``D = l1 v v^T + l2 (I - v v^T)``.
* :class:`BumpKernel` -- Gaussian bumps of fixed width on the real line, the
  1-D toy problem for CBP comparisons.

Diffusivities are expressed in um^2/ms (1e-3 mm^2/s) and b-values in s/mm^2,
so the exponent is ``-b * 1e-3 * x^T D x``.

A family is bound to a set of measurement points and exposes ``evaluate``,
``design``, ``oracle``, ``is_duplicate`` and ``rebind``. The oracle maximizes
the normalized correlation ``<r, f~> / ||f~||`` where ``f~`` is the kernel
vector with an optional constant augmentation entry appended.
"""
from dataclasses import dataclass

import numpy as np

from .sphere import (axis_angle, electrostatic_directions, geodesic_sphere,
                     hemisphere, normalize, random_unit_vectors,
                     tangent_basis, to_cartesian, to_spherical)

__all__ = [
    "AcquisitionScheme",
    "TensorParams",
    "Bump1dParams",
    "tensor_kernel_eval",
    "tensor_kernel_grad",
    "TensorKernel",
    "TensorAngles",
    "BumpKernel",
    "bump1d_eval",
    "bump1d_grad",
]

B_SCALE = 1e-3


@dataclass(frozen=True, eq=False)
class AcquisitionScheme:
    """Unit gradient directions acquired at a single b-value (s/mm^2)."""

    directions: np.ndarray
    b_value: float = 1000.0

    def __post_init__(self):
        d = np.array(self.directions, dtype=float)
        if d.ndim != 2 or d.shape[1] != 3 or len(d) < 1:
            raise ValueError("directions must have shape (n, 3)")
        norms = np.linalg.norm(d, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("directions must be unit vectors")
        if not self.b_value > 0:
            raise ValueError("b_value must be positive")
        d.setflags(write=False)
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "b_value", float(self.b_value))

    def __len__(self):
        return len(self.directions)

    def subset(self, index):
        return AcquisitionScheme(self.directions[np.asarray(index)],
                                 self.b_value)

    def __eq__(self, other):
        return (isinstance(other, AcquisitionScheme)
                and self.b_value == other.b_value
                and np.array_equal(self.directions, other.directions))


@dataclass(frozen=True, eq=False)
class TensorParams:
    """Axially symmetric tensor: unit axis plus axial/radial diffusivity."""

    direction: np.ndarray
    axial: float
    radial: float = 0.0

    def __post_init__(self):
        v = np.array(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(v)
        if not np.isfinite(n) or n == 0:
            raise ValueError("direction must be a finite nonzero vector")
        v = v / n
        v.setflags(write=False)
        object.__setattr__(self, "direction", v)
        object.__setattr__(self, "axial", float(self.axial))
        object.__setattr__(self, "radial", float(self.radial))
        if not (np.isfinite(self.axial) and np.isfinite(self.radial)):
            raise ValueError("diffusivities must be finite")
        if not 0 <= self.radial <= self.axial:
            raise ValueError("need 0 <= radial <= axial")

    @property
    def tensor(self):
        v = self.direction
        vv = np.outer(v, v)
        return self.axial * vv + self.radial * (np.eye(3) - vv)

    def to_dict(self):
        return {"v": [float(x) for x in self.direction],
                "lambda1": self.axial, "lambda2": self.radial}

    @classmethod
    def from_dict(cls, d):
        return cls(d["v"], d["lambda1"], d.get("lambda2", 0.0))

    def __eq__(self, other):
        return (isinstance(other, TensorParams)
                and np.array_equal(self.direction, other.direction)
                and self.axial == other.axial
                and self.radial == other.radial)

    def __repr__(self):
        v = np.round(self.direction, 4).tolist()
        return f"TensorParams(v={v}, l1={self.axial:.4g}, l2={self.radial:.4g})"


@dataclass(frozen=True)
class Bump1dParams:
    center: float

    def to_dict(self):
        return {"center": float(self.center)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["center"])


# -- tensor kernel -----------------------------------------------------------

def tensor_kernel_eval(params, scheme):
    """Evaluate the tensor kernel at every direction of ``scheme``."""
    c = scheme.directions @ params.direction
    q = params.radial + (params.axial - params.radial) * c ** 2
    return np.exp(-scheme.b_value * B_SCALE * q)


def tensor_kernel_grad(params, scheme):
    """Jacobian of :func:`tensor_kernel_eval`, shape ``(n, 4)``.

    Columns are the derivatives with respect to the two tangent coordinates
    at ``v`` (basis from :func:`ebp.sphere.tangent_basis`, with the axis
    renormalized after the perturbation), the axial and the radial
    diffusivity.
    """
    X = scheme.directions
    v = params.direction
    e1, e2 = tangent_basis(v)
    c = X @ v
    bs = scheme.b_value * B_SCALE
    l1, l2 = params.axial, params.radial
    f = np.exp(-bs * (l2 + (l1 - l2) * c ** 2))
    dq = np.column_stack([
        2 * (l1 - l2) * c * (X @ e1),
        2 * (l1 - l2) * c * (X @ e2),
        c ** 2,
        1 - c ** 2,
    ])
    return -bs * f[:, None] * dq


class TensorKernel:
    """Tensor kernel family bound to an acquisition scheme.

    Parameters
    ----------
    scheme : AcquisitionScheme
    axial_range : (float, float)
        Box constraint on the axial diffusivity searched by the oracle.
    fit_radial : bool
        If False the oracle pins the radial diffusivity to zero.
    restarts : int
        Number of Newton restarts per oracle call.
    n_candidates : int
        Random parameter draws screened to choose the restart points.
    """

    name = "tensor"

    def __init__(self, scheme, axial_range=(0.5, 2.0), fit_radial=True,
                 restarts=10, max_newton_steps=50, tol=1e-10,
                 n_candidates=500, merge_angle=1e-3, merge_tol=1e-6):
        if restarts < 1:
            raise ValueError("restarts must be >= 1")
        lo, hi = axial_range
        if not 0 < lo <= hi:
            raise ValueError("invalid axial_range")
        self.scheme = scheme
        self.axial_range = (float(lo), float(hi))
        self.fit_radial = bool(fit_radial)
        self.restarts = int(restarts)
        self.max_newton_steps = int(max_newton_steps)
        self.tol = float(tol)
        self.n_candidates = int(n_candidates)
        self.merge_angle = float(merge_angle)
        self.merge_tol = float(merge_tol)

    def config(self):
        return dict(axial_range=self.axial_range, fit_radial=self.fit_radial,
                    restarts=self.restarts,
                    max_newton_steps=self.max_newton_steps, tol=self.tol,
                    n_candidates=self.n_candidates,
                    merge_angle=self.merge_angle, merge_tol=self.merge_tol)

    def rebind(self, scheme):
        return TensorKernel(scheme, **self.config())

    @property
    def n_points(self):
        return len(self.scheme)

    @property
    def bscale(self):
        return self.scheme.b_value * B_SCALE

    def evaluate(self, params):
        return tensor_kernel_eval(params, self.scheme)

    def gradient(self, params):
        return tensor_kernel_grad(params, self.scheme)

    def design(self, params_list):
        """Kernel vectors as the columns of an ``(n, K)`` matrix."""
        if len(params_list) == 0:
            return np.zeros((self.n_points, 0))
        V = np.array([p.direction for p in params_list])
        l1 = np.array([p.axial for p in params_list])
        l2 = np.array([p.radial for p in params_list])
        c = self.scheme.directions @ V.T
        return np.exp(-self.bscale * (l2 + (l1 - l2) * c ** 2))

    def is_duplicate(self, p, q):
        return (axis_angle(p.direction, q.direction) < self.merge_angle
                and abs(p.axial - q.axial) < self.merge_tol
                and abs(p.radial - q.radial) < self.merge_tol)

    def default_dictionary(self, n_directions=30, axial=1.25):
        dirs, _ = electrostatic_directions(n_directions, seed=0)
        return [TensorParams(v, axial, 0.0) for v in dirs]

    def grid(self, frequency=6, axials=(0.5, 1.0, 1.5, 2.0), radial=0.0):
        """Discrete dictionary: geodesic axes times axial diffusivities.

        ``frequency=6`` gives the 362-vertex tessellation, i.e. 181 distinct
        axes once antipodal pairs are merged.
        """
        axes = hemisphere(geodesic_sphere(frequency))
        return [TensorParams(v, a, radial) for a in axials for v in axes]

    def fodf_direction(self, params):
        return params.direction

    # -- oracle -------------------------------------------------------------

    def correlation(self, residual, augment, params):
        """Normalized correlation ``<r, f~> / ||f~||`` for one parameter."""
        f = self.evaluate(params)
        r, ra, aug = _split(residual, augment, len(f))
        return float((r @ f + ra * aug) / np.sqrt(f @ f + aug * aug))

    def _screen(self, r, ra, aug, V, l1, s):
        c = self.scheme.directions @ V.T
        F = np.exp(-self.bscale * l1 * (s + (1 - s) * c ** 2))
        return (r @ F + ra * aug) / np.sqrt(np.sum(F * F, axis=0) + aug * aug)

    def _local(self, v, l1, s, r, ra, aug, order):
        X = self.scheme.directions
        bs = self.bscale
        c = X @ v
        f = np.exp(-bs * l1 * (s + (1 - s) * c * c))
        A = r @ f + ra * aug
        B = f @ f + aug * aug
        g = A / np.sqrt(B)
        if order == 0:
            return g
        e1, e2 = tangent_basis(v)
        c1, c2 = X @ e1, X @ e2
        # q = l1 (s + (1 - s) c^2) in coordinates (t1, t2, l1, s)
        dq = np.column_stack([
            2 * l1 * (1 - s) * c * c1,
            2 * l1 * (1 - s) * c * c2,
            s + (1 - s) * c * c,
            l1 * (1 - c * c),
        ])
        d2q = np.zeros((len(c), 4, 4))
        d2q[:, 0, 0] = 2 * l1 * (1 - s) * (c1 * c1 - c * c)
        d2q[:, 1, 1] = 2 * l1 * (1 - s) * (c2 * c2 - c * c)
        d2q[:, 0, 1] = d2q[:, 1, 0] = 2 * l1 * (1 - s) * c1 * c2
        d2q[:, 0, 2] = d2q[:, 2, 0] = 2 * (1 - s) * c * c1
        d2q[:, 1, 2] = d2q[:, 2, 1] = 2 * (1 - s) * c * c2
        d2q[:, 0, 3] = d2q[:, 3, 0] = -2 * l1 * c * c1
        d2q[:, 1, 3] = d2q[:, 3, 1] = -2 * l1 * c * c2
        d2q[:, 2, 3] = d2q[:, 3, 2] = 1 - c * c
        df = -bs * f[:, None] * dq
        d2f = f[:, None, None] * (bs * bs * dq[:, :, None] * dq[:, None, :]
                                  - bs * d2q)
        dA = df.T @ r
        dB = 2 * df.T @ f
        d2A = np.einsum("i,ijk->jk", r, d2f)
        d2B = 2 * (df.T @ df + np.einsum("i,ijk->jk", f, d2f))
        sB = np.sqrt(B)
        grad = dA / sB - 0.5 * A * dB / B ** 1.5
        hess = (d2A / sB
                - 0.5 * (np.outer(dA, dB) + np.outer(dB, dA)) / B ** 1.5
                - 0.5 * A * d2B / B ** 1.5
                + 0.75 * A * np.outer(dB, dB) / B ** 2.5)
        return g, grad, hess

    def _step(self, v, l1, s, d):
        e1, e2 = tangent_basis(v)
        v_new = normalize(v + d[0] * e1 + d[1] * e2)
        lo, hi = self.axial_range
        return (v_new, float(np.clip(l1 + d[2], lo, hi)),
                float(np.clip(s + d[3], 0.0, 1.0)))

    def _ascend(self, v, l1, s, r, ra, aug):
        lo, hi = self.axial_range
        # correlations are bounded by ||r~||; tolerances scale with it
        scale = float(np.sqrt(r @ r + ra * ra)) or 1.0
        base_free = np.array([True, True, hi > lo, self.fit_radial])
        g = self._local(v, l1, s, r, ra, aug, 0)
        for _ in range(self.max_newton_steps):
            g, grad, H = self._local(v, l1, s, r, ra, aug, 2)
            free = base_free.copy()
            # bound-active coordinates whose gradient points outward
            if (l1 <= lo and grad[2] < 0) or (l1 >= hi and grad[2] > 0):
                free[2] = False
            if (s <= 0 and grad[3] < 0) or (s >= 1 and grad[3] > 0):
                free[3] = False
            gF = grad[free]
            if np.linalg.norm(gF) <= self.tol * scale:
                break
            HF = H[np.ix_(free, free)]
            d = _newton_direction(gF, HF)
            full = np.zeros(4)
            full[free] = d
            tnorm = np.linalg.norm(full[:2])
            if tnorm > 0.5:
                full *= 0.5 / tnorm
            slope = grad @ full
            # near the optimum values agree to round-off; Armijo is blind there
            slack = 8 * np.finfo(float).eps * abs(g)
            alpha = 1.0
            accepted = False
            for _ in range(40):
                cand = self._step(v, l1, s, alpha * full)
                g_new = self._local(*cand, r, ra, aug, 0)
                if g_new >= g + 1e-4 * alpha * slope - slack:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                break
            v, l1, s = cand
            g = g_new
        return g, v, l1, s

    def oracle(self, residual, augment=None, rng=None):
        """Approximate argmax of the normalized correlation with ``residual``.

        Draws ``n_candidates`` random parameters (axes uniform on the sphere,
        axial diffusivity uniform in ``axial_range``, radial uniform in
        ``[0, axial]``), keeps the ``restarts`` best, and runs a safeguarded
        projected Newton ascent from each. Ties go to the lowest restart.
        """
        rng = np.random.default_rng(rng)
        r, ra, aug = _split(residual, augment, self.n_points)
        if not (np.all(np.isfinite(r)) and np.isfinite(ra)):
            raise ValueError("residual must be finite")
        lo, hi = self.axial_range
        m = max(self.n_candidates, self.restarts)
        V = random_unit_vectors(m, rng)
        L1 = rng.uniform(lo, hi, m)
        S = rng.uniform(0.0, 1.0, m) if self.fit_radial else np.zeros(m)
        score = self._screen(r, ra, aug, V, L1, S)
        order = np.argsort(-score, kind="stable")[:self.restarts]

        best = (-np.inf, None)
        for k in order:
            g, v, l1, s = self._ascend(V[k], float(L1[k]), float(S[k]),
                                       r, ra, aug)
            if not np.isfinite(g):
                g, v, l1, s = score[k], V[k], float(L1[k]), float(S[k])
            if g > best[0]:
                best = (g, (v, l1, s))
        v, l1, s = best[1]
        return TensorParams(v, l1, s * l1)

    def dense_rho(self, residual, augment=None, frequency=32,
                  axials=np.linspace(0.5, 2.0, 8), radials=(0.0,)):
        """Brute-force max of the normalized correlation over a dense grid.

        The default grid is the 10242-vertex geodesic sphere times eight
        axial diffusivities with zero radial diffusivity.
        """
        r, ra, aug = _split(residual, augment, self.n_points)
        dirs = geodesic_sphere(frequency)
        c2 = (self.scheme.directions @ dirs.T) ** 2
        best = -np.inf
        for a in axials:
            for rad in radials:
                if rad > a:
                    continue
                F = np.exp(-self.bscale * (rad + (a - rad) * c2))
                score = (r @ F + ra * aug) / np.sqrt(
                    np.sum(F * F, axis=0) + aug * aug)
                best = max(best, float(score.max()))
        return best

    params_from_dict = staticmethod(TensorParams.from_dict)


class TensorAngles:
    """Box-coordinate view of the tensor family for first-order CBP.

    Parameters are ``(polar, azimuth, axial)`` with zero radial diffusivity,
    so that Voronoi cells of a product grid are axis-aligned boxes.
    """

    def __init__(self, kernel):
        self.kernel = kernel
        self.dim = 3

    def from_array(self, theta):
        polar, azimuth, axial = theta
        return TensorParams(to_cartesian(polar, azimuth), axial, 0.0)

    def as_array(self, params):
        polar, azimuth = to_spherical(params.direction)
        return np.array([polar, azimuth, params.axial])

    def vector(self, theta):
        return self.kernel.evaluate(self.from_array(theta))

    def jacobian(self, theta):
        polar, azimuth, axial = theta
        X = self.kernel.scheme.directions
        v = to_cartesian(polar, azimuth)
        dv_polar = np.array([np.cos(polar) * np.cos(azimuth),
                             np.cos(polar) * np.sin(azimuth),
                             -np.sin(polar)])
        dv_azimuth = np.array([-np.sin(polar) * np.sin(azimuth),
                               np.sin(polar) * np.cos(azimuth), 0.0])
        c = X @ v
        bs = self.kernel.bscale
        f = np.exp(-bs * axial * c ** 2)
        dfdc = -bs * axial * 2 * c * f
        return np.column_stack([dfdc * (X @ dv_polar),
                                dfdc * (X @ dv_azimuth),
                                -bs * c ** 2 * f])


# -- 1-D bumps ---------------------------------------------------------------

def bump1d_eval(params, abscissae, width):
    x = np.asarray(abscissae, dtype=float)
    return np.exp(-0.5 * ((x - params.center) / width) ** 2)


def bump1d_grad(params, abscissae, width):
    """Derivative with respect to the center, shape ``(n, 1)``."""
    x = np.asarray(abscissae, dtype=float)
    f = bump1d_eval(params, x, width)
    return (f * (x - params.center) / width ** 2)[:, None]


class BumpKernel:
    """Gaussian bumps ``exp(-(x - c)^2 / (2 w^2))`` with centers in ``[a, b]``."""

    name = "bump1d"
    dim = 1

    def __init__(self, abscissae, width=1.0, interval=(0.0, 10.0),
                 restarts=5, n_candidates=201, max_newton_steps=50,
                 tol=1e-12, merge_tol=1e-6):
        a, b = interval
        if not a < b:
            raise ValueError("interval must satisfy a < b")
        if not width > 0:
            raise ValueError("width must be positive")
        self.abscissae = np.asarray(abscissae, dtype=float)
        self.width = float(width)
        self.interval = (float(a), float(b))
        self.restarts = int(restarts)
        self.n_candidates = int(n_candidates)
        self.max_newton_steps = int(max_newton_steps)
        self.tol = float(tol)
        self.merge_tol = float(merge_tol)

    def config(self):
        return dict(width=self.width, interval=self.interval,
                    restarts=self.restarts, n_candidates=self.n_candidates,
                    max_newton_steps=self.max_newton_steps, tol=self.tol,
                    merge_tol=self.merge_tol)

    def rebind(self, abscissae):
        return BumpKernel(abscissae, **self.config())

    @property
    def n_points(self):
        return len(self.abscissae)

    def evaluate(self, params):
        return bump1d_eval(params, self.abscissae, self.width)

    def gradient(self, params):
        return bump1d_grad(params, self.abscissae, self.width)

    def design(self, params_list):
        if len(params_list) == 0:
            return np.zeros((self.n_points, 0))
        c = np.array([p.center for p in params_list])
        return np.exp(-0.5 * ((self.abscissae[:, None] - c) / self.width) ** 2)

    def is_duplicate(self, p, q):
        return abs(p.center - q.center) < self.merge_tol

    def default_dictionary(self, n=16):
        return [Bump1dParams(c) for c in np.linspace(*self.interval, n)]

    def grid(self, n=16):
        return self.default_dictionary(n)

    # box-coordinate interface used by first-order CBP
    def from_array(self, theta):
        return Bump1dParams(float(np.asarray(theta).reshape(-1)[0]))

    def as_array(self, params):
        return np.array([params.center])

    def vector(self, theta):
        return self.evaluate(self.from_array(theta))

    def jacobian(self, theta):
        return self.gradient(self.from_array(theta))

    def correlation(self, residual, augment, params):
        f = self.evaluate(params)
        r, ra, aug = _split(residual, augment, len(f))
        return float((r @ f + ra * aug) / np.sqrt(f @ f + aug * aug))

    def _profile(self, centers, r, ra, aug):
        F = np.exp(-0.5 * ((self.abscissae[:, None] - centers) / self.width)
                   ** 2)
        return (r @ F + ra * aug) / np.sqrt(np.sum(F * F, axis=0) + aug * aug)

    def _local(self, center, r, ra, aug):
        x, w = self.abscissae, self.width
        u = x - center
        f = np.exp(-0.5 * (u / w) ** 2)
        df = f * u / w ** 2
        d2f = f * (u * u / w ** 4 - 1 / w ** 2)
        A = r @ f + ra * aug
        B = f @ f + aug * aug
        dA, d2A = r @ df, r @ d2f
        dB, d2B = 2 * f @ df, 2 * (df @ df + f @ d2f)
        sB = np.sqrt(B)
        g = A / sB
        grad = dA / sB - 0.5 * A * dB / B ** 1.5
        hess = (d2A / sB - dA * dB / B ** 1.5 - 0.5 * A * d2B / B ** 1.5
                + 0.75 * A * dB * dB / B ** 2.5)
        return g, grad, hess

    def _ascend(self, center, r, ra, aug):
        a, b = self.interval
        g = self._local(center, r, ra, aug)[0]
        for _ in range(self.max_newton_steps):
            g, grad, hess = self._local(center, r, ra, aug)
            if (center <= a and grad < 0) or (center >= b and grad > 0):
                break
            if abs(grad) <= self.tol * max(1.0, abs(g)):
                break
            if hess < 0:
                d = -grad / hess
            else:
                d = grad * self.width ** 2
            d = float(np.clip(d, -self.width, self.width))
            alpha = 1.0
            for _ in range(40):
                c_new = float(np.clip(center + alpha * d, a, b))
                g_new = self._local(c_new, r, ra, aug)[0]
                if g_new >= g + 1e-4 * alpha * grad * d:
                    break
                alpha *= 0.5
            else:
                break
            moved = abs(c_new - center)
            center, g = c_new, g_new
            if moved < 1e-13:
                break
        return g, center

    def oracle(self, residual, augment=None, rng=None):
        """Screen a uniform grid plus random draws, then Newton-refine."""
        rng = np.random.default_rng(rng)
        r, ra, aug = _split(residual, augment, self.n_points)
        if not (np.all(np.isfinite(r)) and np.isfinite(ra)):
            raise ValueError("residual must be finite")
        a, b = self.interval
        cand = np.concatenate([np.linspace(a, b, self.n_candidates),
                               rng.uniform(a, b, self.restarts)])
        score = self._profile(cand, r, ra, aug)
        order = np.argsort(-score, kind="stable")[:self.restarts]
        best_g, best_c = -np.inf, None
        for k in order:
            g, c = self._ascend(float(cand[k]), r, ra, aug)
            if g > best_g:
                best_g, best_c = g, c
        return Bump1dParams(best_c)

    params_from_dict = staticmethod(Bump1dParams.from_dict)


def _newton_direction(grad, H):
    """Ascent direction: Newton if ``H`` is negative definite, else shifted.

    Concave eigendirections take the Newton step; flat or convex ones take
    a damped gradient step, so a ridge does not slow the rest down.
    """
    try:
        L = np.linalg.cholesky(-H)
        return np.linalg.solve(L.T, np.linalg.solve(L, grad))
    except np.linalg.LinAlgError:
        w, Q = np.linalg.eigh(H)
        scale = float(np.max(np.abs(w)))
        if scale == 0 or not np.isfinite(scale):
            return grad
        shift = max(w[-1], 0.0) + 0.1 * scale
        denom = np.where(w < -1e-6 * scale, -w, shift)
        return Q @ ((Q.T @ grad) / denom)


def _split(residual, augment, n):
    """Split a (possibly augmented) residual into data part and extra entry."""
    residual = np.asarray(residual, dtype=float)
    if augment is None:
        if len(residual) != n:
            raise ValueError(f"residual length {len(residual)} != {n}")
        return residual, 0.0, 0.0
    if len(residual) != n + 1:
        raise ValueError(f"augmented residual length {len(residual)} != {n + 1}")
    return residual[:n], float(residual[n]), float(augment)
