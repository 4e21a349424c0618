import json

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import kstest

import pitcal.rng as rngmod
from pitcal.calibrate import (
    CalibrationSet,
    IdentityPitCdf,
    LocalEmpiricalConfig,
    PitCdfModel,
    PredictionSet,
    augment,
    calpit_hpd,
    calpit_interval,
    compute_pit_values,
    estimated_ot,
    fit_local_empirical,
    load_pit_model,
    recalibrate,
    save_pit_model,
)
from pitcal.errors import (
    DegenerateRecalibration,
    InsufficientData,
    LengthMismatch,
    ModelEvalError,
)
from pitcal.grid import GridDensity, YGrid, cdf_from_density, fit_monotone_spline
from pitcal.calibrate import RecalibratedDistribution
from pitcal.models import (
    CallableDensityModel,
    GaussianInitialModel,
    MarginalHistogramModel,
    UniformInitialModel,
    model_cdf,
)
from pitcal.synthgen import TwoGroupConfig, sample_example1, sample_example2


def make_rd_from_density(grid, values):
    """Assemble a recalibrated-distribution object from a raw density."""
    d = GridDensity(grid, values)
    total = np.trapezoid(values, grid.points)
    pdf = GridDensity(grid, values / total)
    cdf = cdf_from_density(pdf)
    p, first = np.unique(cdf.values, return_index=True)
    qs = fit_monotone_spline(p, grid.points[first])
    return RecalibratedDistribution(cdf=cdf, quantile_spline=qs, pdf=pdf)


class TestComputePitValues:
    def test_pit_of_truth_is_uniform(self):
        data = sample_example2("skewed", 10000, seed=5)
        truth = CallableDensityModel(data.grid, lambda x: data.oracle.pdf(data.grid.points, x))
        sub = CalibrationSet(data.cal.xs[:2000], data.cal.ys[:2000])
        pits = compute_pit_values(truth, sub)
        assert kstest(pits, "uniform").pvalue > 0.01

    def test_point_mass_below_gives_ones(self):
        data = sample_example2("skewed", 50, seed=5)
        lo = data.grid.lo
        span = data.grid.hi - data.grid.lo

        def low_spike(x):
            vals = np.zeros(len(data.grid))
            vals[0] = 1.0
            vals[1] = 0.5
            return vals

        model = CallableDensityModel(data.grid, low_spike)
        pits = compute_pit_values(model, data.cal)
        assert np.all(pits > 0.999)

    def test_marginal_estimate_fails_locally_on_two_group_data(self):
        data = sample_example1(TwoGroupConfig(), 4000, seed=31)
        marginal = MarginalHistogramModel(data.grid, data.cal.ys)
        pits = compute_pit_values(marginal, data.cal)
        overall = kstest(pits, "uniform")
        branch = kstest(pits[data.cal.xs[:, 0] > 2.0], "uniform")
        # globally much closer to uniform than on the bimodal slice, which rejects
        assert branch.pvalue < 1e-4
        assert overall.statistic < 0.5 * branch.statistic

    def test_eval_error_carries_index(self):
        grid = YGrid(np.linspace(0, 1, 5))

        def bad(x):
            if x[0] > 0.5:
                raise RuntimeError("boom")
            return np.ones(5)

        model = CallableDensityModel(grid, bad)
        cal = CalibrationSet(np.array([[0.0], [0.9]]), np.array([0.5, 0.5]))
        with pytest.raises(ModelEvalError) as err:
            compute_pit_values(model, cal)
        assert err.value.index == 1


class TestAugment:
    def test_counts_and_consistency(self):
        cal = CalibrationSet(np.array([[0.0], [1.0]]), np.array([0.0, 0.0]))
        aug = augment(cal, [0.3, 0.8], k_factor=3, seed=9)
        assert len(aug) == 6
        pit_per_row = aug.base_pit[aug.row_index]
        np.testing.assert_array_equal(aug.w, (pit_per_row <= aug.gamma).astype(np.uint8))

    def test_zero_pit_always_hit(self):
        cal = CalibrationSet(np.array([[0.0]]), np.array([0.0]))
        aug = augment(cal, [0.0], k_factor=100, seed=1)
        assert np.all(aug.w == 1)

    def test_mean_w_half_for_uniform_pits(self):
        rng = np.random.default_rng(12)
        n = 1000
        cal = CalibrationSet(rng.normal(size=(n, 2)), np.zeros(n))
        aug = augment(cal, rng.uniform(size=n), k_factor=50, seed=2)
        assert abs(aug.w.mean() - 0.5) < 0.02

    def test_order_independent_rows(self):
        rng = np.random.default_rng(3)
        xs = rng.normal(size=(5, 1))
        pits = rng.uniform(size=5)
        full = augment(CalibrationSet(xs, np.zeros(5)), pits, 4, seed=77)
        head = augment(CalibrationSet(xs[:3], np.zeros(3)), pits[:3], 4, seed=77)
        np.testing.assert_array_equal(full.gamma[: 3 * 4], head.gamma)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        cal = CalibrationSet(rng.normal(size=(20, 1)), np.zeros(20))
        pits = rng.uniform(size=20)
        a = augment(cal, pits, 7, seed=5)
        b = augment(cal, pits, 7, seed=5)
        np.testing.assert_array_equal(a.gamma, b.gamma)
        np.testing.assert_array_equal(a.w, b.w)

    def test_length_mismatch(self):
        cal = CalibrationSet(np.zeros((3, 1)), np.zeros(3))
        with pytest.raises(LengthMismatch):
            augment(cal, [0.5, 0.5], 2, seed=0)

    def test_gamma_in_open_unit_interval(self):
        rng = np.random.default_rng(14)
        cal = CalibrationSet(rng.normal(size=(200, 1)), np.zeros(200))
        aug = augment(cal, rng.uniform(size=200), 20, seed=3)
        assert np.all(aug.gamma > 0.0) and np.all(aug.gamma < 1.0)

    def test_debug_csv_export(self, tmp_path):
        from pitcal.dataio import write_augmented_csv

        rng = np.random.default_rng(15)
        cal = CalibrationSet(rng.normal(size=(4, 2)), np.zeros(4))
        aug = augment(cal, rng.uniform(size=4), 3, seed=1)
        path = tmp_path / "aug.csv"
        write_augmented_csv(path, aug, comment="stamp")
        lines = path.read_text().splitlines()
        assert lines[1] == "x0,x1,gamma,w"
        assert len(lines) == 2 + 12
        fields = lines[2].split(",")
        assert fields[-1] in ("0", "1")
        assert 0.0 < float(fields[-2]) < 1.0


class TestLocalEmpirical:
    def test_three_neighbor_count(self):
        cal = CalibrationSet(np.array([[0.0], [0.1], [-0.1]]), np.zeros(3))
        model = fit_local_empirical(cal, [0.1, 0.5, 0.9], LocalEmpiricalConfig(k=3))
        assert model.predict(0.5, [0.0]) == pytest.approx(2.0 / 3.0)

    def test_gamma_one_is_one(self):
        rng = np.random.default_rng(8)
        cal = CalibrationSet(rng.normal(size=(50, 2)), np.zeros(50))
        model = fit_local_empirical(cal, rng.uniform(size=50), LocalEmpiricalConfig(k=10))
        for _ in range(5):
            assert model.predict(1.0, rng.normal(size=2)) == 1.0

    def test_well_specified_sup_deviation_within_dkw(self):
        rng = np.random.default_rng(42)
        n, k = 5000, 250
        cal = CalibrationSet(rng.uniform(-1, 1, size=(n, 1)), np.zeros(n))
        model = fit_local_empirical(cal, rng.uniform(size=n), LocalEmpiricalConfig(k=k))
        # DKW bound at per-point level 0.001 (family ~2% over 20 points)
        eps = np.sqrt(np.log(2.0 / 0.001) / (2.0 * k))
        gam = np.linspace(0.025, 0.975, 41)
        for xv in rng.uniform(-0.9, 0.9, size=20):
            curve = model.predict_curve(gam, [xv])
            assert np.max(np.abs(curve - gam)) <= eps

    def test_k_too_large(self):
        cal = CalibrationSet(np.zeros((3, 1)), np.zeros(3))
        with pytest.raises(InsufficientData):
            fit_local_empirical(cal, [0.5, 0.5, 0.5], LocalEmpiricalConfig(k=4))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LocalEmpiricalConfig(k=3, bandwidth=0.5)
        with pytest.raises(ValueError):
            LocalEmpiricalConfig()
        with pytest.raises(ValueError):
            LocalEmpiricalConfig(k=3, weighting="nope")

    def test_bandwidth_mode(self):
        rng = np.random.default_rng(8)
        cal = CalibrationSet(rng.uniform(-1, 1, size=(200, 1)), np.zeros(200))
        pits = rng.uniform(size=200)
        model = fit_local_empirical(cal, pits, LocalEmpiricalConfig(bandwidth=0.5))
        val = model.predict(0.5, [0.0])
        assert 0.0 <= val <= 1.0

    def test_monotone_in_gamma_exactly(self):
        rng = np.random.default_rng(5)
        cal = CalibrationSet(rng.normal(size=(500, 2)), np.zeros(500))
        model = fit_local_empirical(cal, rng.uniform(size=500), LocalEmpiricalConfig(k=60))
        gam = np.linspace(0.0, 1.0, 101)
        for _ in range(100):
            curve = model.predict_curve(gam, rng.normal(size=2))
            assert np.all(np.diff(curve) >= 0.0)


class TestRecalibrate:
    def test_identity_returns_initial(self):
        data = sample_example2("skewed", 200, seed=3)
        rd = recalibrate(data.initial, IdentityPitCdf(), [0.3])
        c0 = model_cdf(data.initial, [0.3])
        assert np.max(np.abs(rd.cdf.values - c0.values)) <= 1e-9

    def test_skew_direction_follows_oracle(self):
        data = sample_example2("skewed", 10000, seed=7)
        pits = compute_pit_values(data.initial, data.cal)
        r = fit_local_empirical(data.cal, pits, LocalEmpiricalConfig(k=500))

        def mean_of(rd):
            return float(np.trapezoid(rd.pdf.grid.points * rd.pdf.values, rd.pdf.grid.points))

        # oracle: positive skew at x = +1 pushes mass above the initial mean,
        # negative skew at x = -1 below it
        assert data.oracle.quantile(0.5, [1.0]) > 1.0
        assert data.oracle.quantile(0.5, [-1.0]) < -1.0
        rd_pos = recalibrate(data.initial, r, [1.0])
        rd_neg = recalibrate(data.initial, r, [-1.0])
        assert mean_of(rd_pos) > 1.0
        assert mean_of(rd_neg) < -1.0

    def test_two_group_recalibration_recovers_bimodality(self):
        from pitcal.grid import widen_density

        data = sample_example1(TwoGroupConfig(), 8000, seed=21)
        initial = UniformInitialModel(data.grid)
        pits = compute_pit_values(initial, data.cal)
        r = fit_local_empirical(data.cal, pits, LocalEmpiricalConfig(k=800))
        rd = recalibrate(initial, r, [4.0, 0.0])
        step = (data.grid.hi - data.grid.lo) / (len(data.grid) - 1)
        f = widen_density(rd.pdf, 2.0 * step).values
        pts = data.grid.points
        peak_i = int(np.argmax(f))
        modes = [
            i for i in range(1, len(f) - 1)
            if f[i] > f[i - 1] and f[i] >= f[i + 1] and f[i] > 0.05 * f[peak_i]
        ]
        opposite = [i for i in modes if np.sign(pts[i]) != np.sign(pts[peak_i])]
        assert opposite, "no second mode on the other branch"
        m2 = max(opposite, key=lambda i: f[i])
        a, b = sorted((peak_i, m2))
        valley = f[a : b + 1].min()
        assert valley < 0.2 * f[peak_i]

    def test_degenerate_map_rejected(self):
        class ConstantMap(PitCdfModel):
            backend = "stub"

            def predict_curve(self, gammas, x):
                return np.full(np.asarray(gammas).shape, 0.5)

        data = sample_example2("skewed", 100, seed=3)
        with pytest.raises(DegenerateRecalibration):
            recalibrate(data.initial, ConstantMap(), [0.0])


class TestIntervalAndHpd:
    def _normal_rd(self, sd=1.0, n=801):
        grid = YGrid(np.linspace(-6 * sd, 6 * sd, n))
        z = grid.points / sd
        return make_rd_from_density(grid, np.exp(-0.5 * z * z))

    def test_gaussian_interval(self):
        rd = self._normal_rd()
        ps = calpit_interval(rd, 0.1)
        lo, hi = ps.intervals[0]
        assert abs(lo + 1.6449) < 0.02
        assert abs(hi - 1.6449) < 0.02

    def test_uniform_interval(self):
        grid = YGrid(np.linspace(0, 1, 401))
        rd = make_rd_from_density(grid, np.ones(401))
        lo, hi = calpit_interval(rd, 0.2).intervals[0]
        assert abs(lo - 0.1) < 1e-6
        assert abs(hi - 0.9) < 1e-6

    def test_symmetric_about_median(self):
        rd = self._normal_rd(sd=2.0)
        lo, hi = calpit_interval(rd, 0.5).intervals[0]
        assert abs((lo + hi) / 2.0) < 1e-6

    def test_hpd_matches_interval_for_unimodal_symmetric(self):
        rd = self._normal_rd()
        hpd = calpit_hpd(rd, 0.1)
        interval = calpit_interval(rd, 0.1)
        assert len(hpd.intervals) == 1
        np.testing.assert_allclose(hpd.intervals[0], interval.intervals[0], atol=0.03)

    def test_hpd_two_component_mixture(self):
        grid = YGrid(np.linspace(-6, 6, 801))
        z = grid.points

        def mix_pdf(y):
            return 0.5 * (
                np.exp(-0.5 * ((y + 3) / 0.5) ** 2) / (0.5 * np.sqrt(2 * np.pi))
                + np.exp(-0.5 * ((y - 3) / 0.5) ** 2) / (0.5 * np.sqrt(2 * np.pi))
            )

        rd = make_rd_from_density(grid, mix_pdf(z))
        hpd = calpit_hpd(rd, 0.1)
        assert len(hpd.intervals) == 2
        for lo, hi in hpd.intervals:
            mass, _ = quad(mix_pdf, lo, hi)
            assert abs(mass - 0.45) < 0.01

    def test_hpd_flat_density_length(self):
        grid = YGrid(np.linspace(0, 1, 201))
        rd = make_rd_from_density(grid, np.ones(201))
        hpd = calpit_hpd(rd, 0.1)
        step = 1.0 / 200
        assert abs(hpd.total_size() - 0.9) <= step

    def test_hpd_never_longer_than_interval_when_unimodal(self):
        rd = self._normal_rd(sd=1.3)
        step = rd.pdf.grid.points[1] - rd.pdf.grid.points[0]
        hpd = calpit_hpd(rd, 0.2)
        interval = calpit_interval(rd, 0.2)
        assert hpd.total_size() <= interval.total_size() + 2 * step

    def test_alpha_validation(self):
        rd = self._normal_rd()
        with pytest.raises(ValueError):
            calpit_interval(rd, 0.0)
        with pytest.raises(ValueError):
            calpit_hpd(rd, 1.0)


class TestEstimatedOt:
    def test_identity_fixed_point(self):
        grid = YGrid(np.linspace(0, 1, 101))
        rd = make_rd_from_density(grid, np.ones(101))
        c0 = rd.cdf
        for y in np.linspace(0.05, 0.95, 10):
            assert abs(estimated_ot(rd, c0, y) - y) < 1e-6

    def test_monotone_composition(self):
        data = sample_example2("skewed", 5000, seed=9)
        pits = compute_pit_values(data.initial, data.cal)
        r = fit_local_empirical(data.cal, pits, LocalEmpiricalConfig(k=400))
        rd = recalibrate(data.initial, r, [0.5])
        c0 = model_cdf(data.initial, [0.5])
        ys = np.linspace(data.grid.lo, data.grid.hi, 1000)
        t = np.array([estimated_ot(rd, c0, y) for y in ys])
        assert np.all(np.diff(t) >= -1e-9)

    def test_near_identity_where_model_is_correct(self):
        # the truth equals the initial model at x = 0, so the transport map is
        # the identity up to estimation noise; tolerances derived from the
        # local-ECDF noise scale at n = 10000, k = 500
        data = sample_example2("skewed", 10000, seed=13)
        pits = compute_pit_values(data.initial, data.cal)
        r = fit_local_empirical(data.cal, pits, LocalEmpiricalConfig(k=500))
        rd = recalibrate(data.initial, r, [0.0])
        c0 = model_cdf(data.initial, [0.0])
        qs = np.linspace(0.05, 0.95, 19)
        ys = np.array([data.oracle.quantile(q, [0.0]) for q in qs])
        t = np.array([estimated_ot(rd, c0, y) for y in ys])
        assert np.mean(np.abs(t - ys)) < 0.1
        assert np.max(np.abs(t - ys)) < 0.3


class TestPredictionSet:
    def test_validation(self):
        with pytest.raises(ValueError):
            PredictionSet(((1.0, 0.5),), 0.9, "interval")
        with pytest.raises(ValueError):
            PredictionSet(((0.0, 1.0), (0.5, 2.0)), 0.9, "hpd")
        with pytest.raises(ValueError):
            PredictionSet(((0.0, 1.0), (2.0, 3.0)), 0.9, "interval")

    def test_contains_and_size(self):
        ps = PredictionSet(((0.0, 1.0), (2.0, 3.0)), 0.9, "hpd")
        np.testing.assert_array_equal(
            ps.contains([0.5, 1.5, 2.5]), [True, False, True]
        )
        assert ps.total_size() == pytest.approx(2.0)


class TestSerialization:
    def test_local_model_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        cal = CalibrationSet(rng.normal(size=(100, 2)), np.zeros(100))
        pits = rng.uniform(size=100)
        model = fit_local_empirical(cal, pits, LocalEmpiricalConfig(k=20))
        path = tmp_path / "model.json"
        save_pit_model(model, path)
        loaded = load_pit_model(path)
        gam = np.linspace(0.05, 0.95, 11)
        x = rng.normal(size=2)
        np.testing.assert_allclose(loaded.predict_curve(gam, x), model.predict_curve(gam, x))
        doc = json.loads(path.read_text())
        assert doc["format_version"] == 1
        assert doc["backend"] == "local-empirical"

    def test_identity_round_trip(self, tmp_path):
        path = tmp_path / "id.json"
        save_pit_model(IdentityPitCdf(), path)
        loaded = load_pit_model(path)
        assert loaded.predict(0.3, [0.0]) == 0.3
