"""Point sets and small geometric helpers on the unit sphere."""
from functools import lru_cache

import numpy as np

__all__ = [
    "normalize",
    "random_unit_vectors",
    "geodesic_sphere",
    "hemisphere",
    "tangent_basis",
    "axis_angle",
    "coulomb_energy",
    "electrostatic_directions",
    "to_cartesian",
    "to_spherical",
]


def normalize(v, axis=-1):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=axis, keepdims=True)


def random_unit_vectors(n, rng):
    """``n`` directions uniformly distributed on the sphere."""
    return normalize(rng.standard_normal((n, 3)))


def to_cartesian(polar, azimuth):
    polar = np.asarray(polar, dtype=float)
    azimuth = np.asarray(azimuth, dtype=float)
    return np.stack([np.sin(polar) * np.cos(azimuth),
                     np.sin(polar) * np.sin(azimuth),
                     np.cos(polar)], axis=-1)


def to_spherical(points):
    points = normalize(points)
    polar = np.arccos(np.clip(points[..., 2], -1.0, 1.0))
    azimuth = np.arctan2(points[..., 1], points[..., 0])
    return polar, azimuth


def _icosahedron():
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return normalize(verts), faces


@lru_cache(maxsize=16)
def _geodesic(frequency):
    verts, faces = _icosahedron()
    pts = []
    f = frequency
    for a, b, c in faces:
        A, B, C = verts[a], verts[b], verts[c]
        for i in range(f + 1):
            for j in range(f + 1 - i):
                k = f - i - j
                pts.append((i * A + j * B + k * C) / f)
    pts = normalize(np.array(pts))
    # shared edge points appear on several faces
    key = np.round(pts, 9)
    _, idx = np.unique(key, axis=0, return_index=True)
    pts = pts[np.sort(idx)]
    pts.setflags(write=False)
    return pts


def geodesic_sphere(frequency):
    """Vertices of a frequency-``f`` geodesic icosahedron.

    There are ``10 f**2 + 2`` vertices: 362 for ``f=6``, 10242 for ``f=32``.
    The set is antipodally symmetric.
    """
    if frequency < 1:
        raise ValueError("frequency must be >= 1")
    return np.array(_geodesic(int(frequency)))


def hemisphere(points, tol=1e-9):
    """Keep one representative of each antipodal pair."""
    points = np.asarray(points, dtype=float)
    keep = []
    for i, p in enumerate(points):
        if any(abs(p @ points[j]) > 1 - tol for j in keep):
            continue
        keep.append(i)
    return points[keep]


def tangent_basis(v):
    """Two orthonormal vectors spanning the tangent plane at unit ``v``."""
    x, y, z = float(v[0]), float(v[1]), float(v[2])
    ax, ay, az = abs(x), abs(y), abs(z)
    # cross with the coordinate axis least aligned with v
    if ax <= ay and ax <= az:
        e1 = np.array([0.0, z, -y])
    elif ay <= az:
        e1 = np.array([-z, 0.0, x])
    else:
        e1 = np.array([y, -x, 0.0])
    e1 /= np.sqrt(e1 @ e1)
    e2 = np.array([y * e1[2] - z * e1[1],
                   z * e1[0] - x * e1[2],
                   x * e1[1] - y * e1[0]])
    return e1, e2


def axis_angle(u, v):
    """Angle between the axes through ``u`` and ``v`` (antipodes identified).

    Broadcasts over leading dimensions; result in ``[0, pi/2]``.
    """
    u = normalize(u)
    v = normalize(v)
    # flip v onto u's hemisphere; atan2 stays accurate near 0 where arccos
    # loses half the digits
    s = np.where(np.sum(u * v, axis=-1) < 0, -1.0, 1.0)[..., None]
    v = s * v
    return 2 * np.arctan2(np.linalg.norm(u - v, axis=-1),
                          np.linalg.norm(u + v, axis=-1))


def coulomb_energy(points):
    """Antipodally symmetric electrostatic energy of a set of axes.

    Each point interacts with every other point and with its antipode:
    ``sum_{i<j} 1/||x_i - x_j|| + 1/||x_i + x_j||``.
    """
    x = np.asarray(points, dtype=float)
    iu = np.triu_indices(len(x), k=1)
    dm = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)[iu]
    dp = np.linalg.norm(x[:, None, :] + x[None, :, :], axis=-1)[iu]
    return float(np.sum(1.0 / dm) + np.sum(1.0 / dp))


def _energy_and_grad(x):
    diff = x[:, None, :] - x[None, :, :]
    summ = x[:, None, :] + x[None, :, :]
    dm = np.linalg.norm(diff, axis=-1)
    dp = np.linalg.norm(summ, axis=-1)
    np.fill_diagonal(dm, np.inf)
    np.fill_diagonal(dp, np.inf)
    energy = 0.5 * (np.sum(1.0 / dm) + np.sum(1.0 / dp))
    grad = (-np.sum(diff / dm[..., None] ** 3, axis=1)
            - np.sum(summ / dp[..., None] ** 3, axis=1))
    return energy, grad


def electrostatic_directions(n, seed=0, rtol=1e-9, max_iter=100000):
    """Minimize the antipodal Coulomb energy by projected gradient descent.

    Parameters
    ----------
    n : int
        Number of axes, ``n >= 2``.
    seed : int
        Seed for the random starting configuration.
    rtol : float
        Stop when the relative energy decrease of an accepted step falls
        below this value.

    Returns
    -------
    points : (n, 3) array of unit vectors.
    energy : float
    """
    if n < 2:
        raise ValueError("need at least two directions")
    x, energy = _electrostatic(int(n), int(seed), float(rtol), int(max_iter))
    return np.array(x), energy


@lru_cache(maxsize=32)
def _electrostatic(n, seed, rtol, max_iter):
    rng = np.random.default_rng(seed)
    x = random_unit_vectors(n, rng)
    energy, grad = _energy_and_grad(x)
    step = 0.1 / n
    for _ in range(max_iter):
        # tangential component only; the radial part is removed by projection
        g = grad - np.sum(grad * x, axis=1, keepdims=True) * x
        while True:
            trial = normalize(x - step * g)
            e_new, g_new = _energy_and_grad(trial)
            if e_new < energy:
                break
            step *= 0.5
            if step < 1e-16:
                break
        if e_new >= energy:
            break
        decrease = (energy - e_new) / energy
        x, energy, grad = trial, e_new, g_new
        step *= 1.5
        if decrease < rtol:
            break
    x.setflags(write=False)
    return x, float(energy)
