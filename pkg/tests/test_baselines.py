import numpy as np
import pytest

from ebp.baselines import (DtiModel, cross_validate_c, dti_fit, focbp_build,
                           focbp_fit, focbp_tensor_dictionary, grid_nnls_fit,
                           voronoi_intervals)
from ebp.engine import ebp_fit
from ebp.kernels import (AcquisitionScheme, Bump1dParams, BumpKernel,
                         TensorKernel, TensorParams)
from ebp.metrics import predict_on
from ebp.model import RegularizationSpec, transform
from ebp.simulate import SimulationConfig, generate, make_directions
from ebp.sphere import axis_angle, geodesic_sphere, hemisphere, normalize


@pytest.fixture(scope="module")
def scheme():
    return AcquisitionScheme(make_directions(75, 0), 1000.0)


# -- DTI ---------------------------------------------------------------------

def test_dti_exact_on_single_tensor(scheme):
    v = normalize(np.array([0.2, -0.7, 0.4]))
    p = TensorParams(v, 1.5, 0.3)
    y = TensorKernel(scheme).evaluate(p)
    m = dti_fit(scheme, y)
    np.testing.assert_allclose(m.eigenvalues, [1.5, 0.3, 0.3], atol=1e-8)
    assert abs(m.principal_direction @ v) > 1 - 1e-9
    assert m.s0 == pytest.approx(1.0, rel=1e-10)
    np.testing.assert_allclose(m.predict(scheme), y, rtol=1e-10)


@pytest.mark.parametrize("scale", [0.9, 2.5])
def test_dti_scale_goes_to_gauge_not_to_fit(scheme, scale):
    # single shell: s0 trades against the trace; predictions are exact
    v = normalize(np.array([0.5, 0.5, -0.1]))
    y = scale * TensorKernel(scheme).evaluate(TensorParams(v, 1.2, 0.1))
    m = dti_fit(scheme, y)
    np.testing.assert_allclose(m.predict(scheme), y, rtol=1e-10)
    assert abs(m.principal_direction @ v) > 1 - 1e-9
    lam = m.eigenvalues
    assert lam[0] - lam[1] == pytest.approx(1.1, abs=1e-8)
    assert lam[2] >= -1e-9
    if scale > 1:
        # s0 = 1 would need a negative diffusivity
        assert lam[2] == pytest.approx(0.0, abs=1e-12)


def test_dti_isotropic_has_zero_anisotropy(scheme):
    y = np.exp(-0.8 * np.ones(len(scheme)))
    m = dti_fit(scheme, y)
    assert m.fractional_anisotropy == pytest.approx(0.0, abs=1e-8)


def test_dti_misses_every_fascicle_of_a_crossing():
    ds = generate(SimulationConfig(seed=0))
    m = dti_fit(ds.scheme.subset(ds.train), ds.signal[ds.train])
    angles = [np.degrees(axis_angle(m.principal_direction, p.direction))
              for p in ds.truth.model.params]
    assert min(angles) > 10


def test_dti_rejects_bad_input(scheme):
    y = np.ones(len(scheme))
    y[3] = 0.0
    with pytest.raises(ValueError):
        dti_fit(scheme, y)
    small = AcquisitionScheme(make_directions(5, 0))
    with pytest.raises(ValueError):
        dti_fit(small, np.ones(5))


def test_dti_clamps_negative_eigenvalues_and_round_trips():
    m = DtiModel(np.diag([1.0, 0.5, -0.01]), 1.0)
    assert np.all(m.eigenvalues >= 0)
    np.testing.assert_array_equal(m.tensor, m.tensor.T)
    back = DtiModel.from_dict(m.to_dict())
    np.testing.assert_array_equal(back.tensor, m.tensor)
    dirs, mass = m.spikes()
    assert dirs.shape == (1, 3) and mass[0] == 1.0


# -- grid NNLS ---------------------------------------------------------------

def test_grid_nnls_exact_dictionary(scheme):
    fam = TensorKernel(scheme)
    grid = fam.grid(2, (1.0, 1.5))
    k = 17
    y = 0.6 * fam.evaluate(grid[k])
    model = grid_nnls_fit(fam, y, grid)
    assert model.n_components == 1
    assert model.params[0] == grid[k]
    assert model.weights[0] == pytest.approx(0.6, abs=1e-8)


def test_grid_nnls_spreads_off_grid_direction(scheme):
    fam = TensorKernel(scheme)
    axes = hemisphere(geodesic_sphere(2))
    G = np.abs(axes @ axes.T)
    np.fill_diagonal(G, 0)
    i, j = np.unravel_index(np.argmax(G), G.shape)
    mid = normalize(axes[i] + np.sign(axes[i] @ axes[j]) * axes[j])
    grid = [TensorParams(a, 1.5, 0.0) for a in axes]
    y = fam.evaluate(TensorParams(mid, 1.5, 0.0))
    model = grid_nnls_fit(fam, y, grid)
    assert model.n_components >= 2


@pytest.mark.slow
def test_grid_nnls_objective_not_below_ebp():
    reg = RegularizationSpec("volume_anchor", 1.0, 1.0)
    worse = 0
    for seed in range(100):
        ds = generate(SimulationConfig(seed=seed))
        fam = TensorKernel(ds.scheme.subset(ds.train))
        prob = transform(ds.signal[ds.train], fam, reg)
        grid_model = grid_nnls_fit(fam, ds.signal[ds.train], fam.grid(), reg)
        ebp_model, _ = ebp_fit(prob, seed=seed)
        grid_obj = prob.objective(grid_model.weights, grid_model.params)
        ebp_obj = prob.objective(ebp_model.weights, ebp_model.params)
        worse += grid_obj < ebp_obj
    assert worse == 0


def test_grid_nnls_empty_grid(scheme):
    with pytest.raises(ValueError):
        grid_nnls_fit(TensorKernel(scheme), np.ones(len(scheme)), [])


def test_cross_validation_picks_a_grid_value():
    ds = generate(SimulationConfig(seed=4))
    fam = TensorKernel(ds.scheme.subset(ds.train))
    cs = [0.5, 1.0, 2.0]
    best, scores = cross_validate_c(fam, ds.signal[ds.train],
                                    fam.grid(2), cs)
    assert best in cs
    assert scores.shape == (3,) and np.all(scores > 0)
    assert best == cs[int(np.argmin(scores))]
    with pytest.raises(ValueError):
        cross_validate_c(fam, ds.signal[ds.train], fam.grid(2), cs, folds=1)


# -- first-order CBP -------------------------------------------------------------

@pytest.fixture
def bumps():
    return BumpKernel(np.linspace(0, 10, 101), width=0.7, interval=(0, 10))


def test_voronoi_intervals():
    cells = voronoi_intervals([1.0, 2.0, 4.0], (0.0, 5.0))
    np.testing.assert_array_equal(cells, [[0, 1.5], [1.5, 3], [3, 5]])
    with pytest.raises(ValueError):
        voronoi_intervals([2.0, 1.0], (0, 5))


def test_focbp_columns_match_taylor(bumps):
    grid = np.arange(0.5, 10, 1.0)
    d = focbp_build(bumps, [grid], [(0, 10)])
    x, w = bumps.abscissae, bumps.width
    for k, (v, i) in enumerate(zip(d.vertices[:, 0], d.owner)):
        c = grid[i]
        f = np.exp(-(x - c) ** 2 / (2 * w * w))
        df = f * (x - c) / (w * w)
        np.testing.assert_allclose(d.Z[:, k], f + (v - c) * df, atol=1e-12)
        lo, hi = d.cells[i][0]
        assert lo <= v <= hi
    assert len(d.vertices) == 2 * len(grid)


def test_focbp_degenerate_cell_is_plain_column(bumps):
    grid = np.arange(0.5, 10, 1.0)
    d = focbp_build(bumps, [grid], [(0, 10)], shrink=0.0)
    F = bumps.design([Bump1dParams(c) for c in grid])
    np.testing.assert_array_equal(d.Z, F)


def test_focbp_zero_width_equals_grid_nnls(bumps):
    rng = np.random.default_rng(2)
    grid = np.arange(0.5, 10, 1.0)
    d = focbp_build(bumps, [grid], [(0, 10)], shrink=0.0)
    y = bumps.design([Bump1dParams(3.3), Bump1dParams(6.8)]) @ [1.0, 0.5]
    y += 0.01 * rng.normal(size=len(y))
    a = focbp_fit(d, y)
    b = grid_nnls_fit(bumps, y, [Bump1dParams(c) for c in grid])
    np.testing.assert_array_equal(a.weights, b.weights)
    assert a.params == b.params


def test_focbp_on_grid_center_exact(bumps):
    grid = np.arange(0.5, 10, 1.0)
    d = focbp_build(bumps, [grid], [(0, 10)])
    y = 0.7 * bumps.evaluate(Bump1dParams(4.5))
    model = focbp_fit(d, y)
    assert model.n_components == 1
    assert model.params[0].center == pytest.approx(4.5, abs=1e-8)
    assert model.weights[0] == pytest.approx(0.7, abs=1e-8)


def test_focbp_midpoint_beats_grid(bumps):
    grid = np.arange(0.5, 10, 1.0)
    d = focbp_build(bumps, [grid], [(0, 10)])
    c0 = 5.0
    y = bumps.evaluate(Bump1dParams(c0))
    model = focbp_fit(d, y)

    def err(m):
        c = np.array([p.center for p in m.params])
        return m.weights @ np.abs(c - c0) / m.weights.sum()
    grid_model = grid_nnls_fit(bumps, y, [Bump1dParams(c) for c in grid])
    assert err(model) < 0.5
    assert err(model) < err(grid_model)


def test_focbp_recovery_formulas(bumps):
    # a hand-built gamma exercises the weight and parameter recovery
    grid = np.array([2.0, 6.0])
    d = focbp_build(bumps, [grid], [(0, 8)])
    lo0, hi0 = d.cells[0][0]
    assert (lo0, hi0) == (0.0, 4.0)
    # symmetric mass on both vertices of cell 0 gives the cell center
    y = d.Z[:, :2] @ [0.5, 0.5]
    m = focbp_fit(d, y)
    assert m.params[0].center == pytest.approx(2.0, abs=1e-9)
    assert m.weights[0] == pytest.approx(1.0, abs=1e-9)
    # all mass on one vertex returns that vertex
    y = d.Z[:, 3] * 0.4
    m = focbp_fit(d, y)
    assert m.n_components == 1
    assert m.params[0].center == pytest.approx(d.vertices[3, 0], abs=1e-9)


def test_focbp_requires_gradients(scheme):
    with pytest.raises(TypeError):
        focbp_build(TensorKernel(scheme), [np.arange(3)], [(0, 3)])


def test_focbp_tensor_dictionary_is_evaluable(scheme):
    kernel = TensorKernel(scheme)
    d = focbp_tensor_dictionary(kernel, n_polar=3, n_azimuth=6,
                                axials=(1.0, 2.0))
    assert d.n_cells == 36
    assert d.Z.shape == (75, 36 * 8)
    assert np.all(np.isfinite(d.Z))
    y = kernel.evaluate(TensorParams([0, 0, 1], 1.5, 0.0))
    model = focbp_fit(d, y)
    other = AcquisitionScheme(make_directions(20, 3))
    assert predict_on(model, other).shape == (20,)
