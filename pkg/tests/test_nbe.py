import numpy as np
import pytest

import levynbe as ln
from levynbe.nets import Activation, Aggregation


CP = ln.ModelSpec.from_tag("cp")
BOX = ln.default_prior(CP)


def tiny_estimator(seed=0, input_len=16, agg=Aggregation.MEAN):
    return ln.build_estimator(
        CP, BOX, input_len, 6, agg, Activation.LEAKY_RELU,
        np.random.default_rng(seed), hidden=(8, 8),
    )


class TestForward:
    def test_output_strictly_inside_box(self):
        est = tiny_estimator()
        rng = np.random.default_rng(1)
        out = est.forward_batch(rng.normal(size=(50, 16)) * 10)
        assert np.all(out > BOX.lower) and np.all(out < BOX.upper)

    def test_zero_weights_give_midpoint(self):
        est = tiny_estimator()
        for w in est.parameters():
            w[...] = 0.0
        out = est.forward(np.zeros(16))
        assert np.allclose(out.values, 0.5 * (BOX.lower + BOX.upper), atol=1e-14)

    def test_input_length_mismatch(self):
        est = tiny_estimator()
        with pytest.raises(ln.InputLengthMismatch):
            est.forward(np.zeros(17))
        with pytest.raises(ln.InputLengthMismatch):
            est.forward_batch(np.zeros((3, 5)))

    @pytest.mark.parametrize("agg", list(Aggregation))
    def test_permutation_invariance(self, agg):
        est = tiny_estimator(seed=2, agg=agg)
        rng = np.random.default_rng(3)
        x = rng.normal(size=16)
        base = est.forward(x).values
        for _ in range(20):
            out = est.forward(x[rng.permutation(16)]).values
            assert np.max(np.abs(out - base)) < 1e-12

    def test_matches_straight_line_oracle(self):
        # Independent re-implementation with explicit loops.
        est = tiny_estimator(seed=5, input_len=6)
        x = np.random.default_rng(6).normal(size=6)

        def leaky(v):
            return np.where(v > 0, v, 0.01 * v)

        def run_net(net, inp):
            a = inp
            for i, (w, b) in enumerate(zip(net.weights, net.biases)):
                a = w @ a + b
                if i < len(net.weights) - 1:
                    a = leaky(a)
            return a

        embeds = np.stack([run_net(est.summary, np.array([xi])) for xi in x])
        pooled = embeds.mean(axis=0)
        raw = run_net(est.inference, pooled)
        expected = BOX.lower + BOX.width / (1.0 + np.exp(-raw))
        assert np.max(np.abs(est.forward(x).values - expected)) < 1e-10


class TestLossValue:
    def test_zero_at_identity(self):
        p = ln.ParamVector(np.array([0.5, 0.1, 0.04]), CP)
        for kind in (ln.LossKind.msle(), ln.LossKind.mae(), ln.LossKind.mse(),
                     ln.LossKind.linlin(0.3)):
            assert ln.loss_value(kind, p, p, BOX) == 0.0

    def test_linlin_half_is_half_mae(self):
        a = ln.ParamVector(np.array([0.5, 0.1, 0.04]), CP)
        b = ln.ParamVector(np.array([0.8, -0.2, 0.11]), CP)
        mae = ln.loss_value(ln.LossKind.mae(), a, b, BOX)
        ll = ln.loss_value(ln.LossKind.linlin(0.5), a, b, BOX)
        assert ll == pytest.approx(0.5 * mae, rel=1e-12)

    def test_msle_closed_form(self):
        # Normalized estimate at the upper corner, truth at the lower:
        # every dimension contributes (ln 2)^2.
        est = ln.ParamVector(BOX.upper, CP)
        tru = ln.ParamVector(BOX.lower, CP)
        expected = np.log(2.0) ** 2
        assert ln.loss_value(ln.LossKind.msle(), est, tru, BOX) == pytest.approx(
            expected, rel=1e-12
        )

    def test_out_of_box_raises(self):
        good = ln.ParamVector(np.array([0.5, 0.1, 0.04]), CP)
        bad = ln.ParamVector(np.array([2.0, 0.1, 0.04]), CP)
        with pytest.raises(ln.OutOfBox):
            ln.loss_value(ln.LossKind.msle(), bad, good, BOX)

    def test_linlin_alpha_validation(self):
        with pytest.raises(ValueError):
            ln.LossKind.linlin(0.0)
        with pytest.raises(ValueError):
            ln.LossKind.linlin(1.0)
        assert ln.LossKind.parse("linlin:0.05").alpha == 0.05


@pytest.fixture(scope="module")
def trained():
    cfg = ln.TrainConfig(
        k=200, j=2, n_t=32, epochs=6, seed=ln.SeedSpec(77),
        batch_size=32, embed_dim=6, hidden=(8, 8),
    )
    return ln.train(CP, BOX, cfg), cfg


class TestTrain:
    def test_returned_weights_beat_or_match_init(self, trained):
        (est, report), cfg = trained
        assert len(report.epoch_val_risk) == 6
        # Rebuild the validation pool and score the returned weights.
        from levynbe.nbe import simulate_training_pool

        thetas, pool, _ = simulate_training_pool(CP, BOX, cfg)
        n_val = max(1, int(round(cfg.k * cfg.val_fraction)))
        split = (cfg.k - n_val) * cfg.j
        truths = np.repeat(thetas, cfg.j, axis=0)
        returned_risk = est.batch_risk(pool[split:], truths[split:], cfg.loss)
        assert returned_risk <= report.init_val_risk + 1e-12

    def test_training_actually_improves(self, trained):
        (_, report), _ = trained
        assert report.best_epoch >= 1
        assert min(report.epoch_val_risk) < report.init_val_risk

    def test_risk_direction_over_three_seeds(self):
        improved = 0
        for seed in (301, 302, 303):
            cfg = ln.TrainConfig(
                k=200, j=2, n_t=32, epochs=6, seed=ln.SeedSpec(seed),
                batch_size=32, embed_dim=6, hidden=(8, 8),
            )
            _, report = ln.train(CP, BOX, cfg)
            assert min(report.epoch_val_risk) <= report.epoch_val_risk[0]
            improved += min(report.epoch_val_risk) < report.epoch_val_risk[0]
        assert improved >= 2

    def test_deterministic_weights(self, trained):
        (est, report), cfg = trained
        est2, report2 = ln.train(CP, BOX, cfg)
        for a, b in zip(est.parameters(), est2.parameters()):
            assert np.array_equal(a, b)
        assert report.epoch_val_risk == report2.epoch_val_risk

    def test_pool_reuse_bit_identical(self, trained):
        _, cfg = trained
        from levynbe.nbe import simulate_training_pool

        t1, p1, r1 = simulate_training_pool(CP, BOX, cfg)
        t2, p2, r2 = simulate_training_pool(CP, BOX, cfg)
        assert np.array_equal(t1, t2) and np.array_equal(p1, p2) and r1 == r2

    def test_dvg_underflow_draws_resampled(self):
        model = ln.ModelSpec.from_tag("dvg:2")
        prior = ln.PriorBox([1e-6, 1e-6, 1e-6], [3.0, 25.0, 25.0], model)
        cfg = ln.TrainConfig(
            k=12, j=1, n_t=64, epochs=1, seed=ln.SeedSpec(5),
            batch_size=8, embed_dim=4, hidden=(6,),
        )
        from levynbe.nbe import simulate_training_pool

        thetas, pool, resampled = simulate_training_pool(model, prior, cfg)
        assert np.all(np.isfinite(pool))
        assert resampled > 0  # wide subordination priors hit the floor


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        est = tiny_estimator(seed=9)
        path = tmp_path / "est.json"
        ln.save(est, path)
        back = ln.load(path)
        for a, b in zip(est.parameters(), back.parameters()):
            assert np.array_equal(a, b)
        x = np.random.default_rng(10).normal(size=(4, 16))
        assert np.array_equal(est.forward_batch(x), back.forward_batch(x))
        assert back.output_box.model == est.output_box.model
        assert back.input_len == est.input_len

    def test_truncated_file_raises(self, tmp_path):
        est = tiny_estimator()
        path = tmp_path / "est.json"
        ln.save(est, path)
        blob = path.read_text()
        path.write_text(blob[: len(blob) // 2])
        with pytest.raises(ln.CorruptArtifact):
            ln.load(path)

    def test_bit_flip_raises(self, tmp_path):
        est = tiny_estimator()
        path = tmp_path / "est.json"
        ln.save(est, path)
        blob = path.read_text()
        idx = blob.index('"w": "') + 10
        flipped = blob[:idx] + ("A" if blob[idx] != "A" else "B") + blob[idx + 1 :]
        path.write_text(flipped)
        with pytest.raises(ln.CorruptArtifact):
            ln.load(path)

    def test_version_999_raises(self, tmp_path):
        import json

        est = tiny_estimator()
        path = tmp_path / "est.json"
        ln.save(est, path)
        payload = json.loads(path.read_text())
        payload["format_version"] = 999
        path.write_text(json.dumps(payload))
        with pytest.raises(ln.FormatVersionMismatch):
            ln.load(path)

    def test_report_exports(self, tmp_path):
        report = ln.TrainReport([0.5, 0.4], [0.6, 0.5], 2, 1.0, 0.7, 0)
        blob = report.to_json_dict()
        assert blob["best_epoch"] == 2
        csv_text = report.to_csv()
        assert csv_text.splitlines()[0] == "epoch,train_risk,val_risk"
        assert len(csv_text.splitlines()) == 3
