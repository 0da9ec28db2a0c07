"""Uncertainty quantification around the neural point estimator.

Two complementary routes:

* nonparametric bootstrap: resample the increments with replacement
  (valid because they are i.i.d.), re-estimate, and take empirical
  quantiles of the estimates, capturing the sampling variability of the
  estimator itself;
* posterior quantiles: train two extra estimators under asymmetric
  absolute losses whose optima are posterior quantiles, giving
  likelihood-free credible intervals.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InputLengthMismatch, ModelMismatch
from .models import IncrementSeries, ModelSpec, ParamVector, PriorBox, SeedSpec, stream_rng
from .nbe import (
    DeepSetsEstimator,
    LossKind,
    TrainConfig,
    TrainReport,
    _train_on_pool,
    simulate_training_pool,
)


class IntervalMethod(str, Enum):
    BOOTSTRAP = "bootstrap"
    POSTERIOR_QUANTILE = "posterior_quantile"


@dataclass
class IntervalSet:
    """Per-parameter interval endpoints at one coverage level."""

    lower: ParamVector
    upper: ParamVector
    level: float
    method: IntervalMethod
    crossings: np.ndarray | None = None  # which coordinates needed a swap

    def __post_init__(self):
        if self.lower.model != self.upper.model:
            raise ModelMismatch("interval endpoints disagree on the model")
        if not (0.0 < self.level < 1.0):
            raise ValueError("level must be in (0, 1)")
        if np.any(self.lower.values > self.upper.values):
            raise ValueError("interval lower endpoints must not exceed uppers")

    def widths(self) -> np.ndarray:
        return self.upper.values - self.lower.values

    def to_json_dict(self) -> dict:
        names = self.lower.model.param_names
        return {
            "model": self.lower.model.tag(),
            "method": self.method.value,
            "level": self.level,
            "lower": {n: float(v) for n, v in zip(names, self.lower.values)},
            "upper": {n: float(v) for n, v in zip(names, self.upper.values)},
        }


def bootstrap_interval(
    est: DeepSetsEstimator,
    data: IncrementSeries,
    b: int,
    level: float,
    seed: SeedSpec,
) -> IntervalSet:
    """Percentile bootstrap interval from ``b`` resampled re-estimates.

    Quantiles use linear interpolation of order statistics, so the
    endpoints are reproducible across implementations.
    """
    if len(data) != est.input_len:
        raise InputLengthMismatch(
            f"expected {est.input_len} increments, got {len(data)}"
        )
    if b < 100:
        raise ValueError("b must be >= 100")
    if not (0.0 < level < 1.0):
        raise ValueError("level must be in (0, 1)")
    rng = stream_rng(seed)
    n = len(data)
    idx = rng.integers(0, n, size=(b, n))
    estimates = est.forward_resampled(data.values, idx)
    lo_q, hi_q = 0.5 * (1.0 - level), 0.5 * (1.0 + level)
    lo = np.quantile(estimates, lo_q, axis=0, method="linear")
    hi = np.quantile(estimates, hi_q, axis=0, method="linear")
    model = est.output_box.model
    return IntervalSet(
        ParamVector(lo, model), ParamVector(hi, model), level, IntervalMethod.BOOTSTRAP
    )


@dataclass
class QuantileBundle:
    """Point estimator plus the two quantile estimators bracketing it."""

    lower_est: DeepSetsEstimator
    upper_est: DeepSetsEstimator
    point_est: DeepSetsEstimator
    level: float

    def __post_init__(self):
        ests = (self.lower_est, self.upper_est, self.point_est)
        box = self.point_est.output_box
        for e in ests:
            if e.output_box.model != box.model or e.input_len != self.point_est.input_len:
                raise ModelMismatch("bundle estimators disagree on model or input length")


def quantile_alphas(level: float) -> tuple[float, float]:
    """Pinball-loss alphas bracketing a central interval of the given level."""
    if not (0.0 < level < 1.0):
        raise ValueError("level must be in (0, 1)")
    return 0.5 * (1.0 - level), 0.5 * (1.0 + level)


def train_quantile_bundle(
    model: ModelSpec, prior: PriorBox, cfg: TrainConfig, level: float
) -> tuple[QuantileBundle, list[TrainReport]]:
    """Train point, lower-quantile, and upper-quantile estimators.

    All three share one simulated pool (bit-identical for a given
    cfg.seed); the quantile pair uses asymmetric absolute losses at
    alpha = (1 -+ level)/2.
    """
    alpha_lo, alpha_hi = quantile_alphas(level)
    thetas, pool, resampled = simulate_training_pool(model, prior, cfg)
    reports = []

    def fit(loss: LossKind, stream: int) -> DeepSetsEstimator:
        sub = TrainConfig(
            k=cfg.k, j=cfg.j, n_t=cfg.n_t, epochs=cfg.epochs, seed=cfg.seed,
            batch_size=cfg.batch_size, learning_rate=cfg.learning_rate,
            embed_dim=cfg.embed_dim, loss=loss, val_fraction=cfg.val_fraction,
            aggregation=cfg.aggregation, activation=cfg.activation, hidden=cfg.hidden,
        )
        est, report = _train_on_pool(
            model, prior, sub, thetas, pool, resampled, init_stream=stream
        )
        reports.append(report)
        return est

    point = fit(cfg.loss, 0)
    lo = fit(LossKind.linlin(alpha_lo), 1)
    hi = fit(LossKind.linlin(alpha_hi), 2)
    return QuantileBundle(lo, hi, point, level), reports


def credible_interval(bundle: QuantileBundle, data: IncrementSeries) -> IntervalSet:
    """Posterior credible interval from the trained quantile pair.

    Coordinates where the quantile estimators cross are swapped (never
    dropped) and reported in the result's ``crossings`` mask.
    """
    lo = bundle.lower_est.forward(data).values
    hi = bundle.upper_est.forward(data).values
    crossings = lo > hi
    lo_fixed = np.where(crossings, hi, lo)
    hi_fixed = np.where(crossings, lo, hi)
    model = bundle.point_est.output_box.model
    return IntervalSet(
        ParamVector(lo_fixed, model),
        ParamVector(hi_fixed, model),
        bundle.level,
        IntervalMethod.POSTERIOR_QUANTILE,
        crossings=crossings,
    )


def intervals_disjoint(a: IntervalSet, b: IntervalSet) -> np.ndarray:
    """True per coordinate where the closed intervals do not overlap."""
    if a.lower.model != b.lower.model:
        raise ModelMismatch("intervals refer to different models")
    if a.level != b.level:
        raise ModelMismatch("intervals have different levels")
    return (a.upper.values < b.lower.values) | (b.upper.values < a.lower.values)


def interval_rows(
    window_id: str, point: ParamVector, interval: IntervalSet
) -> list[dict]:
    """Long-format rows (one per parameter) for CSV/JSON export."""
    names = point.model.param_names
    rows = []
    for i, name in enumerate(names):
        rows.append(
            {
                "window_id": window_id,
                "param": name,
                "point": float(point.values[i]),
                "lower": float(interval.lower.values[i]),
                "upper": float(interval.upper.values[i]),
                "method": interval.method.value,
                "level": interval.level,
            }
        )
    return rows
