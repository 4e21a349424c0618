import numpy as np
import pytest

from pitcal.bench import (
    CoverageReport,
    ExperimentRecipe,
    classify_coverage,
    conditional_coverage,
    run_experiment,
)
from pitcal.calibrate import PredictionSet
from pitcal.errors import ConfigError
from pitcal.synthgen import sample_example2


class TestClassify:
    def test_correct_within_band(self):
        # sd = sqrt(0.9 * 0.1 / 1000) = 0.00949; band half-width 0.01897
        assert classify_coverage(0.905, 0.9, 1000) == "correct"

    def test_under(self):
        assert classify_coverage(0.85, 0.9, 1000) == "under"

    def test_exact_nominal(self):
        assert classify_coverage(0.9, 0.9, 1000) == "correct"

    def test_monotone_in_deviation(self):
        labels = [classify_coverage(0.9 + d, 0.9, 1000) for d in np.linspace(0, 0.08, 30)]
        seen_over = False
        for lab in labels:
            if lab == "over":
                seen_over = True
            if seen_over:
                assert lab == "over"

    def test_pooled_draws_tighten_band(self):
        assert classify_coverage(0.91, 0.9, 1000, n_realizations=1) == "correct"
        assert classify_coverage(0.91, 0.9, 1000, n_realizations=10) == "over"


class TestConditionalCoverage:
    def test_oracle_quantile_set_binomial(self):
        data = sample_example2("skewed", 10, seed=50)
        oracle = data.oracle

        def method(x):
            lo = float(oracle.quantile(0.05, x))
            hi = float(oracle.quantile(0.95, x))
            return PredictionSet(((lo, hi),), 0.9, "interval")

        covs = conditional_coverage(method, oracle, [[0.0], [0.5]], 1000, seed=1)
        for c in covs:
            assert abs(c - 0.9) <= 2 * np.sqrt(0.9 * 0.1 / 1000) + 0.01

    def test_full_support_and_empty(self):
        data = sample_example2("skewed", 10, seed=50)

        full = lambda x: PredictionSet(((-1e6, 1e6),), 0.9, "interval")
        empty = lambda x: PredictionSet((), 0.9, "hpd")
        assert conditional_coverage(full, data.oracle, [[0.0]], 200, seed=2)[0] == 1.0
        assert conditional_coverage(empty, data.oracle, [[0.0]], 200, seed=2)[0] == 0.0


class TestRunExperiment:
    def test_oracle_method_mostly_correct(self):
        recipe = ExperimentRecipe(
            generator="ex2-skewed", method="oracle", n=50, alpha=0.1,
            n_realizations=1, n_mc_draws=1000, seed=3, test_grid_size=41,
        )
        report = run_experiment(recipe)
        assert report.summary["proportion_correct"] >= 0.95

    def test_proportions_partition(self):
        recipe = ExperimentRecipe(
            generator="ex2-skewed", method="initial", initial="generator", n=200,
            alpha=0.1, n_realizations=1, n_mc_draws=100, seed=3, test_grid_size=11,
        )
        report = run_experiment(recipe)
        s = report.summary
        total = s["proportion_under"] + s["proportion_correct"] + s["proportion_over"]
        assert total == pytest.approx(1.0, abs=1e-12)
        assert len(report.points) == 11

    def test_deterministic_given_seed(self):
        recipe = ExperimentRecipe(
            generator="ex2-skewed", method="calpit-int", n=400, alpha=0.1,
            n_realizations=2, n_mc_draws=100, seed=7, initial="uniform",
            backend="local", backend_params={"k": 50}, test_grid_size=7,
        )
        a = run_experiment(recipe).to_json()
        b = run_experiment(recipe, n_threads=2).to_json()
        # wall time is the only nondeterministic field
        a["summary"].pop("runtime_seconds")
        b["summary"].pop("runtime_seconds")
        assert a == b

    def test_desk_scale_two_group_correctness(self):
        # derived desk-scale target: at 300 pooled draws the two-sd band is
        # wide enough for the locally calibrated intervals to classify as
        # correct over most of the grid (observed ~0.69-0.75 across seeds)
        recipe = ExperimentRecipe(
            generator="ex1", method="calpit-int", n=5000, alpha=0.1,
            n_realizations=1, n_mc_draws=300, seed=99, initial="uniform",
            backend="local", backend_params={"k": 500}, test_grid_size=20,
        )
        report = run_experiment(recipe, n_threads=2)
        assert report.summary["proportion_correct"] >= 0.6

    def test_unknown_components_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentRecipe(generator="nope", method="oracle", n=10)
        with pytest.raises(ConfigError):
            ExperimentRecipe(generator="ex1", method="nope", n=10)
        with pytest.raises(ConfigError):
            ExperimentRecipe(generator="ex1", method="oracle", n=10, initial="nope")

    def test_report_files(self, tmp_path):
        recipe = ExperimentRecipe(
            generator="ex2-skewed", method="oracle", n=20, alpha=0.1,
            n_realizations=1, n_mc_draws=50, seed=3, test_grid_size=5,
        )
        report = run_experiment(recipe)
        jpath = tmp_path / "report.json"
        cpath = tmp_path / "report.csv"
        report.write_json(jpath)
        report.write_csv(cpath, comment="stamp")
        import json

        doc = json.loads(jpath.read_text())
        assert doc["format_version"] == 1
        assert {"x", "nominal", "empirical", "classification", "mean_set_size"} <= set(doc["points"][0])
        header = cpath.read_text().splitlines()[1]
        assert header == "x0,x1,empirical,classification,set_size"
