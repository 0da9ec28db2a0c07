import numpy as np
import pytest

import levynbe as ln
from levynbe.nets import Activation, Aggregation
from levynbe.uq import IntervalMethod, interval_rows


CP = ln.ModelSpec.from_tag("cp")
BOX = ln.default_prior(CP)


@pytest.fixture(scope="module")
def estimator():
    # Interval mechanics do not require a trained network.
    return ln.build_estimator(
        CP, BOX, 64, 6, Aggregation.MEAN, Activation.LEAKY_RELU,
        np.random.default_rng(0), hidden=(8, 8),
    )


@pytest.fixture(scope="module")
def dataset():
    p = ln.ParamVector(np.array([0.6, 0.1, 0.05]), CP)
    return ln.simulate_increments(p, 65, ln.SeedSpec(1))


class TestBootstrap:
    def test_deterministic(self, estimator, dataset):
        a = ln.bootstrap_interval(estimator, dataset, 150, 0.9, ln.SeedSpec(7))
        b = ln.bootstrap_interval(estimator, dataset, 150, 0.9, ln.SeedSpec(7))
        assert np.array_equal(a.lower.values, b.lower.values)
        assert np.array_equal(a.upper.values, b.upper.values)

    def test_constant_data_zero_width(self, estimator):
        data = ln.IncrementSeries(np.full(64, 0.1))
        iv = ln.bootstrap_interval(estimator, data, 120, 0.9, ln.SeedSpec(2))
        assert np.allclose(iv.widths(), 0.0)
        point = estimator.forward(data)
        assert np.allclose(iv.lower.values, point.values)

    def test_contains_point_estimate(self, estimator, dataset):
        iv = ln.bootstrap_interval(estimator, dataset, 400, 0.9, ln.SeedSpec(3))
        # Percentile intervals of a smooth statistic at B=400 straddle
        # the plug-in point for all but pathological resampling.
        point = estimator.forward(dataset).values
        assert np.all(iv.lower.values <= point) and np.all(point <= iv.upper.values)

    def test_level_monotonicity(self, estimator, dataset):
        widths = []
        for level in (0.5, 0.8, 0.9, 0.99):
            iv = ln.bootstrap_interval(estimator, dataset, 200, level, ln.SeedSpec(4))
            widths.append(iv.widths())
        for narrow, wide in zip(widths, widths[1:]):
            assert np.all(wide >= narrow - 1e-15)

    def test_endpoints_inside_prior_box(self, estimator, dataset):
        iv = ln.bootstrap_interval(estimator, dataset, 150, 0.9, ln.SeedSpec(5))
        assert BOX.contains(iv.lower.values) and BOX.contains(iv.upper.values)

    def test_validation(self, estimator, dataset):
        with pytest.raises(ValueError):
            ln.bootstrap_interval(estimator, dataset, 99, 0.9, ln.SeedSpec(0))
        with pytest.raises(ln.InputLengthMismatch):
            ln.bootstrap_interval(
                estimator, ln.IncrementSeries(np.zeros(10)), 100, 0.9, ln.SeedSpec(0)
            )


class TestCredible:
    def test_crossings_swapped_not_dropped(self, estimator):
        # Estimators with swapped roles force crossings everywhere.
        lo_est = ln.build_estimator(
            CP, BOX, 64, 6, Aggregation.MEAN, Activation.LEAKY_RELU,
            np.random.default_rng(10), hidden=(8, 8),
        )
        hi_est = ln.build_estimator(
            CP, BOX, 64, 6, Aggregation.MEAN, Activation.LEAKY_RELU,
            np.random.default_rng(11), hidden=(8, 8),
        )
        data = ln.IncrementSeries(np.random.default_rng(12).normal(size=64) * 0.1)
        bundle = ln.QuantileBundle(lo_est, hi_est, estimator, 0.9)
        iv = ln.credible_interval(bundle, data)
        assert np.all(iv.lower.values <= iv.upper.values)
        raw_lo = lo_est.forward(data).values
        raw_hi = hi_est.forward(data).values
        assert np.array_equal(iv.crossings, raw_lo > raw_hi)
        assert BOX.contains(iv.lower.values) and BOX.contains(iv.upper.values)

    def test_bundle_model_mismatch(self, estimator):
        vg = ln.ModelSpec.from_tag("vg")
        other = ln.build_estimator(
            vg, ln.default_prior(vg), 64, 6, Aggregation.MEAN,
            Activation.LEAKY_RELU, np.random.default_rng(1), hidden=(8, 8),
        )
        with pytest.raises(ln.ModelMismatch):
            ln.QuantileBundle(other, estimator, estimator, 0.9)


class TestDisjoint:
    def _interval(self, lo, hi, level=0.9):
        return ln.IntervalSet(
            ln.ParamVector(np.array(lo), CP),
            ln.ParamVector(np.array(hi), CP),
            level,
            IntervalMethod.BOOTSTRAP,
        )

    def test_identical_not_disjoint(self):
        a = self._interval([0.2, -0.1, 0.01], [0.4, 0.1, 0.02])
        assert not ln.intervals_disjoint(a, a).any()

    def test_separated_coordinate(self):
        a = self._interval([0.2, -0.1, 0.01], [0.3, 0.0, 0.02])
        b = self._interval([0.4, -0.1, 0.01], [0.5, 0.0, 0.02])
        flags = ln.intervals_disjoint(a, b)
        assert flags[0] and not flags[1] and not flags[2]

    def test_touching_endpoints_overlap(self):
        a = self._interval([0.2, -0.1, 0.01], [0.3, 0.0, 0.02])
        b = self._interval([0.3, -0.1, 0.01], [0.4, 0.0, 0.02])
        assert not ln.intervals_disjoint(a, b)[0]

    def test_level_mismatch(self):
        a = self._interval([0.2, -0.1, 0.01], [0.3, 0.0, 0.02], 0.9)
        b = self._interval([0.2, -0.1, 0.01], [0.3, 0.0, 0.02], 0.8)
        with pytest.raises(ln.ModelMismatch):
            ln.intervals_disjoint(a, b)


class TestBundleTraining:
    def test_alpha_pair_arithmetic(self):
        from levynbe.uq import quantile_alphas

        assert quantile_alphas(0.9) == (pytest.approx(0.05), pytest.approx(0.95))
        assert quantile_alphas(0.5) == (pytest.approx(0.25), pytest.approx(0.75))
        with pytest.raises(ValueError):
            quantile_alphas(1.0)

    def test_alpha_pair_and_pool_sharing(self):
        cfg = ln.TrainConfig(
            k=40, j=1, n_t=16, epochs=2, seed=ln.SeedSpec(20),
            batch_size=8, embed_dim=4, hidden=(6,),
        )
        bundle, reports = ln.train_quantile_bundle(CP, BOX, cfg, level=0.9)
        assert len(reports) == 3
        assert bundle.level == 0.9
        # Same seed, same pool: retraining the point net alone gives
        # bit-identical weights.
        est, _ = ln.train(CP, BOX, cfg)
        for a, b in zip(est.parameters(), bundle.point_est.parameters()):
            assert np.array_equal(a, b)

    def test_interval_rows_layout(self):
        iv = ln.IntervalSet(
            ln.ParamVector(np.array([0.2, -0.1, 0.01]), CP),
            ln.ParamVector(np.array([0.4, 0.1, 0.02]), CP),
            0.9,
            IntervalMethod.BOOTSTRAP,
        )
        point = ln.ParamVector(np.array([0.3, 0.0, 0.015]), CP)
        rows = interval_rows("2022-01-01", point, iv)
        assert [r["param"] for r in rows] == ["lambda", "mu", "sigma2"]
        assert rows[0]["window_id"] == "2022-01-01"
        assert rows[0]["method"] == "bootstrap"
