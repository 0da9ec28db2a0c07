"""Estimator benchmarking: accuracy metrics, a characteristic-function
discrepancy measure, and the simulation-study harness."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .ecf import FrequencyGrid, ecf, lsq_fit, mele_fit, default_grid
from .errors import EmptyInput, GammaShapeUnderflow, ModelMismatch
from .models import (
    IncrementSeries,
    ModelSpec,
    ParamVector,
    PriorBox,
    SeedSpec,
    char_fn,
    simulate_increments_array,
    stream_rng,
)
from .nbe import DeepSetsEstimator, TrainConfig, TrainReport, train


class Method(str, Enum):
    NBE = "nbe"
    LSQ = "lsq"
    MELE = "mele"


@dataclass
class MetricRow:
    param_name: str
    rmse: float
    bias: float
    sd: float
    nrmse: float
    mape: float | None

    def __post_init__(self):
        if self.rmse < 0.0 or self.sd < 0.0:
            raise ValueError("rmse and sd must be nonnegative")
        if self.rmse**2 < self.bias**2 - 1e-9:
            raise ValueError("rmse^2 must dominate bias^2")


def metrics(
    estimates: list[ParamVector] | np.ndarray,
    truths: list[ParamVector] | np.ndarray,
    prior: PriorBox,
) -> list[MetricRow]:
    """Per-parameter RMSE, bias, SD, prior-normalized RMSE, and MAPE.

    MAPE is omitted for a parameter when any true value sits at zero
    (the relative error is undefined there).
    """
    est = _stack(estimates)
    tru = _stack(truths)
    if est.shape[0] == 0:
        raise EmptyInput("no estimates to score")
    if est.shape != tru.shape:
        raise ValueError("estimates and truths must have matching shapes")
    err = est - tru
    rmse = np.sqrt(np.mean(err**2, axis=0))
    bias = np.mean(err, axis=0)
    sd = np.sqrt(np.maximum(rmse**2 - bias**2, 0.0))
    nrmse = rmse / prior.width
    rows = []
    for i, name in enumerate(prior.model.param_names):
        if np.any(np.abs(tru[:, i]) < 1e-12):
            mape = None
        else:
            mape = float(np.mean(np.abs(err[:, i]) / np.abs(tru[:, i])))
        rows.append(
            MetricRow(name, float(rmse[i]), float(bias[i]), float(sd[i]),
                      float(nrmse[i]), mape)
        )
    return rows


def _stack(items) -> np.ndarray:
    if isinstance(items, np.ndarray):
        return items
    return np.array([p.values for p in items])


def l2f_distance(
    theta: ParamVector, theta_hat: ParamVector, grid: FrequencyGrid | None = None
) -> float:
    """Root integrated squared CF discrepancy between two parameter vectors.

    Trapezoidal quadrature of the squared complex modulus of the CF
    difference over the grid (default: 0.05..20 in steps of 0.05). A
    functional closeness measure that stays meaningful when parameters
    are only weakly identified.
    """
    if theta.model != theta_hat.model:
        raise ModelMismatch("parameters belong to different models")
    if grid is None:
        grid = default_l2f_grid()
    if len(grid) < 2:
        raise ValueError("quadrature grid needs at least 2 points")
    w = grid.omegas
    diff = char_fn(theta, w) - char_fn(theta_hat, w)
    integrand = diff.real**2 + diff.imag**2
    area = float(np.sum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(w)))
    return float(np.sqrt(area))


def default_l2f_grid() -> FrequencyGrid:
    return FrequencyGrid(np.linspace(0.05, 20.0, 400))


@dataclass
class BenchConfig:
    """Scale knobs for one benchmark run.

    Desk-scale defaults stay well under paper-scale compute; ``train``
    must be provided for the NBE method. ``mele_max_datasets`` caps how
    many test sets MELE actually fits (its timing is then extrapolated
    to the full count and flagged).
    """

    n_test: int = 200
    n_t: int = 250
    train: TrainConfig | None = None
    grid_count: int = 32
    restarts: int = 5
    mele_grid_count: int = 5
    mele_max_datasets: int | None = None

    def echo(self) -> dict:
        return {
            "n_test": self.n_test,
            "n_t": self.n_t,
            "train": self.train.echo() if self.train else None,
            "grid_count": self.grid_count,
            "restarts": self.restarts,
            "mele_grid_count": self.mele_grid_count,
            "mele_max_datasets": self.mele_max_datasets,
        }


@dataclass
class BenchmarkReport:
    model: ModelSpec
    method: Method
    rows: list[MetricRow]
    est_time: float
    train_time: float | None
    config: dict
    diagnostics: dict = field(default_factory=dict)
    estimates: np.ndarray | None = None
    truths: np.ndarray | None = None

    def to_json_dict(self) -> dict:
        return {
            "model": self.model.tag(),
            "method": self.method.value,
            "rows": [
                {
                    "param": r.param_name,
                    "rmse": r.rmse,
                    "bias": r.bias,
                    "sd": r.sd,
                    "nrmse": r.nrmse,
                    "mape": r.mape,
                }
                for r in self.rows
            ],
            "est_time_s": self.est_time,
            "train_time_s": self.train_time,
            "config": self.config,
            "diagnostics": self.diagnostics,
        }

    def to_markdown(self) -> str:
        """Method x parameter table in RMSE (bias) [SD] layout."""
        names = [r.param_name for r in self.rows]
        header = "| method | " + " | ".join(names) + " |"
        sep = "|" + "---|" * (len(names) + 1)
        cells = [
            f"{r.rmse:.3g} ({r.bias:.3g}) [{r.sd:.3g}]" for r in self.rows
        ]
        row = f"| {self.method.value} | " + " | ".join(cells) + " |"
        return "\n".join([header, sep, row]) + "\n"


def simulate_test_sets(
    model: ModelSpec, prior: PriorBox, n_test: int, n_t: int, seed: SeedSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Prior-drawn test parameters and datasets, shape (n_test, n_t).

    Draws that cannot be simulated (gamma shape underflow) are redrawn
    on fresh streams, mirroring the training pool behavior.
    """
    if n_test < 1:
        raise EmptyInput("n_test must be >= 1")
    thetas = np.empty((n_test, model.dim))
    data = np.empty((n_test, n_t))
    # Purpose paths 10/11 keep the test-set streams disjoint from the
    # training pool's (0..3) even under a shared root seed.
    for i in range(n_test):
        for attempt in range(200):
            rng_p = stream_rng(seed, 10, i, attempt)
            theta = prior.lower + rng_p.random(model.dim) * prior.width
            try:
                data[i] = simulate_increments_array(
                    ParamVector(theta, model), n_t, stream_rng(seed, 11, i, attempt)
                )
            except GammaShapeUnderflow:
                continue
            thetas[i] = theta
            break
        else:
            raise GammaShapeUnderflow(f"test draw {i}: no simulable draw")
    return thetas, data


def run_benchmark(
    model: ModelSpec,
    prior: PriorBox,
    method: Method,
    config: BenchConfig,
    seed: SeedSpec,
    estimator: DeepSetsEstimator | None = None,
) -> BenchmarkReport:
    """Score one method on prior-drawn test sets.

    Estimation wall time covers the estimation loop only, never the
    simulation of the test data. A pre-trained ``estimator`` short
    circuits NBE training (its train time is then reported as None).
    """
    thetas, data = simulate_test_sets(
        model, prior, config.n_test, config.n_t, seed
    )
    diagnostics: dict = {}
    train_time = None

    if method is Method.NBE:
        if estimator is None:
            if config.train is None:
                raise ValueError("NBE benchmark requires a TrainConfig")
            estimator, report = train(model, prior, config.train)
            train_time = report.wall_time
            diagnostics["best_epoch"] = report.best_epoch
            diagnostics["resampled_draws"] = report.resampled_draws
        if estimator.input_len != config.n_t:
            raise ValueError("estimator input length differs from test n_t")
        t0 = time.perf_counter()
        estimates = estimator.forward_batch(data)
        est_time = time.perf_counter() - t0
    elif method is Method.LSQ:
        t0 = time.perf_counter()
        estimates = np.empty_like(thetas)
        for i in range(config.n_test):
            series = IncrementSeries(data[i])
            grid = default_grid(series, config.grid_count)
            fit = lsq_fit(series, model, prior, grid, config.restarts,
                          SeedSpec(seed.root_seed, 2 * i + 1))
            estimates[i] = fit.estimate.values
        est_time = time.perf_counter() - t0
    else:
        budget = config.mele_max_datasets or config.n_test
        n_run = min(budget, config.n_test)
        t0 = time.perf_counter()
        estimates = np.empty((n_run, model.dim))
        for i in range(n_run):
            series = IncrementSeries(data[i])
            grid = default_grid(series, config.mele_grid_count)
            fit = mele_fit(series, model, prior, grid,
                           SeedSpec(seed.root_seed, 2 * i + 1))
            estimates[i] = fit.estimate.values
        measured = time.perf_counter() - t0
        if n_run < config.n_test:
            est_time = measured * config.n_test / n_run
            diagnostics["time_extrapolated_from"] = n_run
        else:
            est_time = measured
        thetas = thetas[:n_run]

    rows = metrics(estimates, thetas, prior)
    if (
        model.kind.value == "dvg"
        and model.levels is not None
        and model.levels >= 2
        and estimates.shape[0] > 2
    ):
        # Identifiability echo: fitted subordination parameters tend to
        # track each other more tightly than the truth does.
        diagnostics["alpha_corr_estimated"] = float(
            np.corrcoef(estimates[:, 1], estimates[:, 2])[0, 1]
        )
        diagnostics["alpha_corr_true"] = float(
            np.corrcoef(thetas[:, 1], thetas[:, 2])[0, 1]
        )
    return BenchmarkReport(
        model, method, rows, est_time, train_time, config.echo(), diagnostics,
        estimates=estimates, truths=thetas,
    )


class SweepAxis(str, Enum):
    INPUT_LEN = "nt"
    PRIOR_DRAWS = "k"
    AGGREGATION = "agg"
    ACTIVATION = "act"


def sweep(
    axis: SweepAxis,
    values: list,
    model: ModelSpec,
    prior: PriorBox,
    method: Method,
    base: BenchConfig,
    seed: SeedSpec,
) -> list[BenchmarkReport]:
    """One benchmark per axis value, otherwise-identical configuration.

    The test-set seed is shared across values so reports compare like
    for like.
    """
    if len(values) < 2:
        raise ValueError("a sweep needs at least 2 axis values")
    reports = []
    for value in values:
        cfg = _override(base, axis, value)
        reports.append(run_benchmark(model, prior, method, cfg, seed))
    return reports


def _override(base: BenchConfig, axis: SweepAxis, value) -> BenchConfig:
    train_cfg = base.train
    n_t = base.n_t
    if axis is SweepAxis.INPUT_LEN:
        n_t = int(value)
        if train_cfg is not None:
            train_cfg = _train_override(train_cfg, n_t=n_t)
    elif train_cfg is None:
        raise ValueError(f"axis {axis.value} requires a TrainConfig")
    elif axis is SweepAxis.PRIOR_DRAWS:
        train_cfg = _train_override(train_cfg, k=int(value))
    elif axis is SweepAxis.AGGREGATION:
        from .nets import Aggregation

        train_cfg = _train_override(train_cfg, aggregation=Aggregation(value))
    else:
        from .nets import Activation

        train_cfg = _train_override(train_cfg, activation=Activation(value))
    return BenchConfig(
        n_test=base.n_test, n_t=n_t, train=train_cfg,
        grid_count=base.grid_count, restarts=base.restarts,
        mele_grid_count=base.mele_grid_count,
        mele_max_datasets=base.mele_max_datasets,
    )


def _train_override(cfg: TrainConfig, **changes) -> TrainConfig:
    kwargs = dict(
        k=cfg.k, j=cfg.j, n_t=cfg.n_t, epochs=cfg.epochs, seed=cfg.seed,
        batch_size=cfg.batch_size, learning_rate=cfg.learning_rate,
        embed_dim=cfg.embed_dim, loss=cfg.loss, val_fraction=cfg.val_fraction,
        aggregation=cfg.aggregation, activation=cfg.activation, hidden=cfg.hidden,
    )
    kwargs.update(changes)
    return TrainConfig(**kwargs)
