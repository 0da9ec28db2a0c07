"""Session-scoped fixtures for the expensive trained artifacts.

The desk-scale gate estimator and its quantile bundle are trained once
per session and shared between the acceptance suite and any module test
that needs a well-trained network.
"""

import time

import numpy as np
import pytest

import levynbe as ln


CP_GATE_SEED = 42
CP_GATE_CONFIG = dict(k=2000, j=5, n_t=250, epochs=30)


@pytest.fixture(scope="session")
def cp_gate_bundle():
    """Point + quantile estimators at the desk-scale gate configuration.

    Returns (bundle, reports, sim_seconds). The point estimator is
    bit-identical to a standalone training run with the same config
    (one shared pool, one shared init stream), so its training cost is
    sim_seconds + reports[0].wall_time.
    """
    model = ln.ModelSpec.from_tag("cp")
    prior = ln.default_prior(model)
    cfg = ln.TrainConfig(seed=ln.SeedSpec(CP_GATE_SEED), **CP_GATE_CONFIG)

    from levynbe.nbe import simulate_training_pool

    t0 = time.perf_counter()
    simulate_training_pool(model, prior, cfg)
    sim_seconds = time.perf_counter() - t0

    bundle, reports = ln.train_quantile_bundle(model, prior, cfg, level=0.9)
    return bundle, reports, sim_seconds


@pytest.fixture(scope="session")
def cp_gate_test_sets(cp_gate_bundle):
    """200 fresh prior-drawn CP test sets at the gate input length."""
    model = ln.ModelSpec.from_tag("cp")
    prior = ln.default_prior(model)
    return ln.simulate_test_sets(model, prior, 200, 250, ln.SeedSpec(777))


@pytest.fixture(scope="session")
def dvg_day_artifact(tmp_path_factory):
    """Small day-length deep VG estimator for the pipeline tests."""
    model = ln.ModelSpec.from_tag("dvg:2")
    prior = ln.default_prior(model)
    cfg = ln.TrainConfig(
        k=300, j=2, n_t=1440, epochs=6, seed=ln.SeedSpec(91), batch_size=64,
    )
    est, report = ln.train(model, prior, cfg)
    path = tmp_path_factory.mktemp("artifacts") / "dvg2_day.json"
    ln.save(est, path)
    return path, est, report
