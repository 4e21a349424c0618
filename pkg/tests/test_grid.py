import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import erf, ndtri

from pitcal.errors import (
    DegenerateDensity,
    EmptySample,
    InvalidBandwidth,
    InvalidDensity,
    InvalidGrid,
)
from pitcal.grid import (
    GridCdf,
    GridDensity,
    YGrid,
    cdf_from_density,
    default_grid,
    invert_cdf,
    pit,
    pit_from_samples,
    pit_matrix,
    read_grid_csv,
    renormalize_density,
    widen_density,
    write_grid_csv,
)


def normal_cdf(x):
    return 0.5 * (1.0 + erf(np.asarray(x) / np.sqrt(2.0)))


def std_normal_density(grid):
    z = grid.points
    return GridDensity(grid, np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi))


class TestYGrid:
    def test_rejects_short_and_unsorted(self):
        with pytest.raises(InvalidGrid):
            YGrid(np.array([0.0, 1.0]))
        with pytest.raises(InvalidGrid):
            YGrid(np.array([0.0, 2.0, 1.0]))
        with pytest.raises(InvalidGrid):
            YGrid(np.array([0.0, np.inf, 1.0]))

    def test_immutable(self):
        g = YGrid(np.linspace(0, 1, 5))
        with pytest.raises(ValueError):
            g.points[0] = -1.0


class TestCdfFromDensity:
    def test_uniform_cumsum(self):
        g = YGrid(np.array([0.0, 0.5, 1.0]))
        c = cdf_from_density(GridDensity(g, np.ones(3)))
        np.testing.assert_allclose(c.values, [0.0, 0.5, 1.0], atol=1e-15)

    def test_triangle_symmetry(self):
        g = YGrid(np.array([-1.0, 0.0, 1.0]))
        c = cdf_from_density(GridDensity(g, np.array([0.0, 1.0, 0.0])))
        np.testing.assert_allclose(c.values, [0.0, 0.5, 1.0], atol=1e-15)

    def test_standard_normal_median(self):
        g = YGrid(np.linspace(-5, 5, 201))
        c = cdf_from_density(std_normal_density(g))
        at_zero = c.values[100]
        assert abs(at_zero - normal_cdf(0.0)) < 1e-4

    def test_negative_density_rejected(self):
        g = YGrid(np.array([0.0, 0.5, 1.0]))
        with pytest.raises(InvalidDensity):
            cdf_from_density(GridDensity(g, np.array([0.1, -0.2, 0.1])))

    def test_endpoints_snapped(self):
        g = YGrid(np.linspace(-3, 3, 31))
        c = cdf_from_density(std_normal_density(g))
        assert c.values[0] == 0.0
        assert c.values[-1] == 1.0


class TestInvertCdf:
    def test_uniform_quantile(self):
        g = YGrid(np.linspace(0, 1, 11))
        c = cdf_from_density(GridDensity(g, np.ones(11)))
        assert abs(invert_cdf(c, 0.25) - 0.25) < 1e-12

    def test_normal_quantile_oracle(self):
        g = YGrid(np.linspace(-5, 5, 201))
        c = cdf_from_density(std_normal_density(g))
        assert abs(invert_cdf(c, 0.95) - ndtri(0.95)) < 0.01

    def test_p_zero_returns_first_point(self):
        g = YGrid(np.linspace(2, 7, 51))
        c = cdf_from_density(std_normal_density(YGrid(np.linspace(2, 7, 51))))
        assert invert_cdf(c, 0.0) == g.points[0]

    def test_p_out_of_range(self):
        g = YGrid(np.linspace(0, 1, 5))
        c = cdf_from_density(GridDensity(g, np.ones(5)))
        with pytest.raises(ValueError):
            invert_cdf(c, 1.5)


class TestPit:
    def test_normal_median(self):
        g = YGrid(np.linspace(-5, 5, 201))
        c = cdf_from_density(std_normal_density(g))
        assert abs(pit(c, 0.0) - 0.5) < 1e-4

    def test_below_grid_clamps_to_zero(self):
        g = YGrid(np.linspace(0, 1, 5))
        c = cdf_from_density(GridDensity(g, np.ones(5)))
        assert pit(c, g.points[0] - 1.0) == 0.0
        assert pit(c, g.points[-1] + 1.0) == 1.0

    def test_identity_cdf(self):
        g = YGrid(np.linspace(0, 1, 101))
        c = cdf_from_density(GridDensity(g, np.ones(101)))
        assert abs(pit(c, 0.73) - 0.73) < 1e-9


class TestPitFromSamples:
    def test_direct_count(self):
        assert pit_from_samples([1.0, 2.0, 3.0], 2.0) == pytest.approx(2.0 / 3.0)

    def test_single_draw(self):
        assert pit_from_samples([5.0], 0.0) == 0.0

    def test_monte_carlo_normal(self):
        rng = np.random.default_rng(7)
        draws = rng.standard_normal(100000)
        # binomial error bound: 3 sd = 3 * sqrt(0.25 / 1e5) < 0.005
        assert abs(pit_from_samples(draws, 0.0) - 0.5) < 0.005

    def test_empty_rejected(self):
        with pytest.raises(EmptySample):
            pit_from_samples([], 0.0)


class TestRenormalize:
    def test_clip_then_scale(self):
        g = YGrid(np.array([0.0, 0.5, 1.0]))
        out = renormalize_density(GridDensity(g, np.array([-0.1, 1.0, -0.1])))
        np.testing.assert_allclose(out.values, [0.0, 2.0, 0.0], atol=1e-15)

    def test_fixed_point_on_valid_density(self):
        g = YGrid(np.linspace(0, 1, 9))
        d = GridDensity(g, np.ones(9))
        out = renormalize_density(d)
        np.testing.assert_allclose(out.values, d.values, atol=1e-12)

    def test_all_zero_rejected(self):
        g = YGrid(np.array([0.0, 0.5, 1.0]))
        with pytest.raises(DegenerateDensity):
            renormalize_density(GridDensity(g, np.zeros(3)))

    def test_idempotent(self):
        g = YGrid(np.linspace(-2, 3, 41))
        rng = np.random.default_rng(3)
        d = GridDensity(g, rng.uniform(0, 2, size=41))
        once = renormalize_density(d)
        twice = renormalize_density(once)
        assert abs(once.integral() - 1.0) < 1e-9
        np.testing.assert_allclose(twice.values, once.values, atol=1e-12)


class TestWiden:
    def test_point_mass_spreads(self):
        g = YGrid(np.linspace(0, 10, 101))
        vals = np.zeros(101)
        vals[50] = 1.0
        step = 0.1
        out = widen_density(GridDensity(g, vals), 2 * step)
        assert np.count_nonzero(out.values > 1e-12) >= 5
        assert abs(out.integral() - 1.0) < 1e-6

    def test_delta_kernel_limit(self):
        g = YGrid(np.linspace(0, 1, 51))
        rng = np.random.default_rng(4)
        d = renormalize_density(GridDensity(g, rng.uniform(0.5, 1.5, size=51)))
        step = g.points[1] - g.points[0]
        out = widen_density(d, step / 100.0)
        np.testing.assert_allclose(out.values, d.values, atol=1e-3)

    def test_gaussian_variance_addition(self):
        g = YGrid(np.linspace(-12, 12, 401))
        d = renormalize_density(std_normal_density(g))
        bw = 1.5
        out = widen_density(d, bw)
        z = g.points
        mean = np.trapezoid(z * out.values, z)
        var = np.trapezoid((z - mean) ** 2 * out.values, z)
        assert abs(var - (1.0 + bw**2)) / (1.0 + bw**2) < 0.05

    def test_bad_bandwidth(self):
        g = YGrid(np.linspace(0, 1, 5))
        with pytest.raises(InvalidBandwidth):
            widen_density(GridDensity(g, np.ones(5)), 0.0)


class TestRoundTrip:
    def test_pit_invert_round_trip(self):
        g = YGrid(np.linspace(-4, 4, 201))
        c = cdf_from_density(std_normal_density(g))
        for p in np.arange(0.01, 1.0, 0.01):
            y = invert_cdf(c, p)
            assert abs(pit(c, y) - p) <= 1e-6

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=0, max_value=10**6))
    def test_cdf_from_density_always_valid(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 40))
        pts = np.unique(rng.uniform(-5, 5, size=n))
        while pts.size < 3:
            pts = np.unique(np.concatenate([pts, rng.uniform(-5, 5, size=3)]))
        vals = rng.uniform(0, 3, size=pts.size)
        if np.trapezoid(vals, pts) <= 0:
            vals = vals + 0.1
        c = cdf_from_density(GridDensity(YGrid(pts), vals))
        assert np.all(np.diff(c.values) >= 0)
        assert 0.0 <= c.values[0] <= 1e-6
        assert 1.0 - 1e-6 <= c.values[-1] <= 1.0


class TestBatchPit:
    def test_matches_scalar_path(self):
        g = YGrid(np.linspace(-5, 5, 101))
        rng = np.random.default_rng(11)
        rows = rng.uniform(0.01, 1.0, size=(20, 101))
        ys = rng.uniform(-6, 6, size=20)
        batch = pit_matrix(g, rows, ys)
        for i in range(20):
            c = cdf_from_density(renormalize_density(GridDensity(g, rows[i])))
            assert abs(batch[i] - pit(c, ys[i])) < 1e-12


class TestSerialization:
    def test_round_trip(self, tmp_path):
        g = YGrid(np.linspace(-1, 2, 31))
        vals = np.exp(-np.abs(g.points))
        path = tmp_path / "density.csv"
        write_grid_csv(path, g, vals, comment="test stamp")
        g2, v2 = read_grid_csv(path)
        np.testing.assert_array_equal(g2.points, g.points)
        np.testing.assert_array_equal(v2, vals)

    def test_default_grid_span(self):
        g = default_grid(np.array([0.0, 10.0]), n_points=201)
        assert len(g) == 201
        assert g.lo == pytest.approx(-1.0)
        assert g.hi == pytest.approx(11.0)
