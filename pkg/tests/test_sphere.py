import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from ebp.sphere import (axis_angle, coulomb_energy, electrostatic_directions,
                        geodesic_sphere, hemisphere, normalize,
                        random_unit_vectors, tangent_basis, to_cartesian,
                        to_spherical)


@pytest.mark.parametrize("freq,count", [(1, 12), (2, 42), (6, 362),
                                        (32, 10242)])
def test_geodesic_vertex_counts(freq, count):
    pts = geodesic_sphere(freq)
    assert pts.shape == (count, 3)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)


def test_geodesic_is_antipodal_and_halves_to_181_axes():
    pts = geodesic_sphere(6)
    nearest = np.max(-pts @ pts.T, axis=1)
    np.testing.assert_allclose(nearest, 1.0, atol=1e-9)
    assert len(hemisphere(pts)) == 181


def test_two_axes_end_orthogonal():
    # energy of two axes at angle t: 1/(2 sin(t/2)) + 1/(2 cos(t/2)),
    # minimized on (0, pi) at t = pi/2
    t = minimize_scalar(lambda t: 1 / (2 * np.sin(t / 2))
                        + 1 / (2 * np.cos(t / 2)),
                        bounds=(0.1, np.pi - 0.1), method="bounded").x
    assert t == pytest.approx(np.pi / 2, abs=1e-5)
    pts, _ = electrostatic_directions(2, seed=3)
    assert abs(pts[0] @ pts[1]) < 1e-4


def test_three_axes_are_octahedron():
    pts, _ = electrostatic_directions(3, seed=0)
    G = np.abs(pts @ pts.T)
    np.testing.assert_allclose(G, np.eye(3), atol=1e-3)


def test_six_axes_are_icosahedral_not_octahedral():
    pts, energy = electrostatic_directions(6, seed=0)
    G = np.abs(pts @ pts.T)[np.triu_indices(6, 1)]
    np.testing.assert_allclose(G, 1 / np.sqrt(5), atol=1e-3)
    icosa = hemisphere(geodesic_sphere(1))
    assert energy == pytest.approx(coulomb_energy(icosa), rel=1e-8)
    # an octahedron as six points contains antipodal pairs
    octa = np.vstack([np.eye(3), -np.eye(3)])
    with np.errstate(divide="ignore"):
        assert coulomb_energy(octa) == np.inf


def test_descent_from_random_start():
    rng = np.random.default_rng(0)
    start = random_unit_vectors(40, rng)
    pts, energy = electrostatic_directions(40, seed=0)
    assert energy <= coulomb_energy(start)
    assert energy == pytest.approx(coulomb_energy(pts), rel=1e-12)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)


def test_directions_deterministic_and_defensive_copy():
    a, _ = electrostatic_directions(20, seed=5)
    a[0] = 0.0
    b, _ = electrostatic_directions(20, seed=5)
    c, _ = electrostatic_directions(20, seed=5)
    np.testing.assert_array_equal(b, c)
    assert np.all(np.linalg.norm(b, axis=1) > 0.99)


def test_rejects_single_direction():
    with pytest.raises(ValueError):
        electrostatic_directions(1)


def test_tangent_basis_orthonormal(rng):
    for v in random_unit_vectors(200, rng):
        e1, e2 = tangent_basis(v)
        B = np.array([v, e1, e2])
        np.testing.assert_allclose(B @ B.T, np.eye(3), atol=1e-12)
    for v in np.eye(3):
        e1, e2 = tangent_basis(v)
        assert abs(e1 @ v) < 1e-15 and abs(e2 @ v) < 1e-15


def test_axis_angle_identifies_antipodes(rng):
    u, v = random_unit_vectors(2, rng)
    assert axis_angle(u, -u) == pytest.approx(0.0, abs=1e-7)
    assert axis_angle(u, v) == pytest.approx(axis_angle(u, -v))
    assert 0 <= axis_angle(u, v) <= np.pi / 2


def test_spherical_round_trip(rng):
    pts = random_unit_vectors(50, rng)
    np.testing.assert_allclose(to_cartesian(*to_spherical(pts)), pts,
                               atol=1e-12)
    np.testing.assert_allclose(normalize(3 * pts), pts)


def test_axis_angle_accurate_near_zero(rng):
    u = random_unit_vectors(100, rng)
    assert np.max(axis_angle(u, u)) < 1e-15
    e1, _ = tangent_basis(u[0])
    w = normalize(u[0] + 1e-9 * e1)
    assert axis_angle(u[0], w) == pytest.approx(1e-9, rel=1e-6)
    v = random_unit_vectors(100, rng)
    ref = np.arccos(np.abs(np.sum(u * v, axis=1)))
    np.testing.assert_allclose(axis_angle(u, v), ref, rtol=1e-10)
