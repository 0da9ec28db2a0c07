import numpy as np
import pytest

import levynbe as ln
from levynbe.nets import Activation, Aggregation, DenseNet, aggregate, aggregate_backward


CP = ln.ModelSpec.from_tag("cp")
BOX = ln.default_prior(CP)


def small_estimator(agg, act, seed=0, input_len=8, embed=4, hidden=(5,)):
    return ln.build_estimator(
        CP, BOX, input_len, embed, agg, act, np.random.default_rng(seed), hidden
    )


def numeric_grads(est, x, truths, kind, step=1e-5):
    grads = []
    for p in est.parameters():
        g = np.zeros_like(p)
        flat_p, flat_g = p.ravel(), g.ravel()
        for j in range(flat_p.size):
            old = flat_p[j]
            flat_p[j] = old + step
            up = est.batch_risk(x, truths, kind)
            flat_p[j] = old - step
            dn = est.batch_risk(x, truths, kind)
            flat_p[j] = old
            flat_g[j] = (up - dn) / (2.0 * step)
        grads.append(g)
    return grads


def max_rel_err(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def batch(seed=0, b=3, n=8):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(b, n))
    truths = BOX.lower + rng.random((b, CP.dim)) * BOX.width
    return x, truths


class TestDenseNet:
    def test_shape_validation(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            DenseNet([2, 3], [rng.normal(size=(4, 2))], [np.zeros(4)], Activation.RELU)

    def test_forward_matches_manual(self):
        net = DenseNet.initialize([2, 3, 2], Activation.TANH, np.random.default_rng(1))
        x = np.array([[0.3, -0.8]])
        z1 = x @ net.weights[0].T + net.biases[0]
        manual = np.tanh(z1) @ net.weights[1].T + net.biases[1]
        assert np.allclose(net.forward(x), manual, atol=1e-14)


class TestAggregations:
    def test_values(self):
        e = np.array([[[1.0, 2.0], [3.0, -1.0], [2.0, 5.0]]])
        assert np.allclose(aggregate(Aggregation.MEAN, e), [[2.0, 2.0]])
        assert np.allclose(aggregate(Aggregation.SUM, e), [[6.0, 6.0]])
        assert np.allclose(aggregate(Aggregation.MAX, e), [[3.0, 5.0]])
        assert np.allclose(aggregate(Aggregation.MIN, e), [[1.0, -1.0]])
        assert np.allclose(aggregate(Aggregation.PRODUCT, e), [[6.0, -10.0]])

    def test_max_tie_goes_to_first(self):
        e = np.array([[[2.0], [2.0], [1.0]]])
        d = aggregate_backward(Aggregation.MAX, e, np.array([[1.0]]))
        assert np.allclose(d[0, :, 0], [1.0, 0.0, 0.0])

    def test_product_zero_handling(self):
        e = np.array([[[0.0], [3.0], [2.0]]])
        d = aggregate_backward(Aggregation.PRODUCT, e, np.array([[1.0]]))
        assert np.allclose(d[0, :, 0], [6.0, 0.0, 0.0])
        e2 = np.array([[[0.0], [0.0], [2.0]]])
        d2 = aggregate_backward(Aggregation.PRODUCT, e2, np.array([[1.0]]))
        assert np.allclose(d2, 0.0)


class TestGradients:
    @pytest.mark.parametrize("agg", list(Aggregation))
    def test_finite_differences_per_aggregation(self, agg):
        est = small_estimator(agg, Activation.LEAKY_RELU, seed=3)
        x, truths = batch(seed=4)
        _, analytic = est.backward(x, truths, ln.LossKind.msle())
        numeric = numeric_grads(est, x, truths, ln.LossKind.msle())
        assert max_rel_err(analytic, numeric) < 1e-4

    @pytest.mark.parametrize(
        "act", [Activation.LEAKY_RELU, Activation.RELU, Activation.TANH]
    )
    def test_finite_differences_per_activation(self, act):
        for seed in range(20):
            est = small_estimator(Aggregation.MEAN, act, seed=seed)
            x, truths = batch(seed=seed + 100)
            if act is Activation.RELU and _near_kink(est, x):
                continue
            _, analytic = est.backward(x, truths, ln.LossKind.msle())
            numeric = numeric_grads(est, x, truths, ln.LossKind.msle())
            assert max_rel_err(analytic, numeric) < 1e-4
            return
        pytest.fail("no off-kink configuration found")

    @pytest.mark.parametrize(
        "kind",
        [ln.LossKind.mae(), ln.LossKind.mse(), ln.LossKind.linlin(0.05)],
    )
    def test_finite_differences_per_loss(self, kind):
        est = small_estimator(Aggregation.MEAN, Activation.TANH, seed=6)
        x, truths = batch(seed=7)
        _, analytic = est.backward(x, truths, kind)
        numeric = numeric_grads(est, x, truths, kind)
        assert max_rel_err(analytic, numeric) < 1e-4

    def test_duplicated_dataset_equal_risk(self):
        est = small_estimator(Aggregation.MEAN, Activation.LEAKY_RELU, seed=8)
        x, truths = batch(seed=9, b=1)
        r1, _ = est.backward(x, truths, ln.LossKind.msle())
        r2, _ = est.backward(
            np.vstack([x, x]), np.vstack([truths, truths]), ln.LossKind.msle()
        )
        assert r1 == pytest.approx(r2, rel=1e-12)

    def test_summary_grads_permutation_invariant(self):
        est = small_estimator(Aggregation.MEAN, Activation.TANH, seed=10)
        x, truths = batch(seed=11, b=2)
        _, g_a = est.backward(x, truths, ln.LossKind.msle())
        perm = np.random.default_rng(12).permutation(x.shape[1])
        _, g_b = est.backward(x[:, perm], truths, ln.LossKind.msle())
        for a, b in zip(g_a, g_b):
            assert np.max(np.abs(a - b)) < 1e-12


def _near_kink(est, x, tol=1e-3):
    z = x.reshape(-1, 1)
    for i, (w, b) in enumerate(zip(est.summary.weights, est.summary.biases)):
        z = z @ w.T + b
        if i < len(est.summary.weights) - 1:
            if np.min(np.abs(z)) < tol:
                return True
            z = np.maximum(z, 0.0)
    return False
