"""High-frequency price ingestion and the daily estimation pipeline.

Prices are aligned to a regular time grid by exact timestamp match (no
interpolation, so gaps stay honest), converted to log returns, cut into
fixed-length windows, and gap-filled by resampling from each window's
own observed returns. Each window is normalized by its empirical
standard deviation before estimation and the scale is folded back into
the estimate afterwards.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum

import numpy as np

from .errors import (
    EmptyWindow,
    InputLengthMismatch,
    NonMonotoneTimestamps,
    NonPositivePrice,
    ParseError,
    ZeroScale,
)
from .models import IncrementSeries, ParamVector, SeedSpec, stream_rng
from .nbe import DeepSetsEstimator

INCREMENT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class CsvFormat:
    timestamp_col: str = "timestamp"
    price_col: str = "close"
    delimiter: str = ","


@dataclass(frozen=True)
class PriceSeries:
    timestamps: np.ndarray  # epoch seconds, strictly increasing
    prices: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        px = np.asarray(self.prices, dtype=np.float64)
        if ts.shape != px.shape or ts.ndim != 1:
            raise ValueError("timestamps and prices must be equal-length vectors")
        if np.any(np.diff(ts) <= 0):
            raise NonMonotoneTimestamps(int(np.nonzero(np.diff(ts) <= 0)[0][0]) + 2)
        if np.any(px <= 0.0):
            bad = int(np.nonzero(px <= 0.0)[0][0])
            raise NonPositivePrice(bad + 1, float(px[bad]))
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "prices", px)

    def __len__(self) -> int:
        return self.timestamps.shape[0]


def load_prices(path, fmt: CsvFormat = CsvFormat()) -> PriceSeries:
    """Parse and validate a price CSV.

    Errors carry the offending 1-based data row; rows must be sorted by
    timestamp with no duplicates and strictly positive prices.
    """
    timestamps: list[int] = []
    prices: list[float] = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=fmt.delimiter)
        if reader.fieldnames is None:
            raise ParseError(0, fmt.timestamp_col, "empty file")
        for col in (fmt.timestamp_col, fmt.price_col):
            if col not in reader.fieldnames:
                raise ParseError(0, col, "missing column")
        for row_no, row in enumerate(reader, start=1):
            ts_text = row.get(fmt.timestamp_col)
            px_text = row.get(fmt.price_col)
            ts = _parse_epoch(ts_text, row_no, fmt.timestamp_col)
            try:
                px = float(px_text)
            except (TypeError, ValueError):
                raise ParseError(row_no, fmt.price_col, f"not a number: {px_text!r}")
            if not np.isfinite(px):
                raise ParseError(row_no, fmt.price_col, f"not finite: {px_text!r}")
            if px <= 0.0:
                raise NonPositivePrice(row_no, px)
            if timestamps and ts <= timestamps[-1]:
                raise NonMonotoneTimestamps(row_no)
            timestamps.append(ts)
            prices.append(px)
    if not timestamps:
        raise ParseError(0, fmt.timestamp_col, "no data rows")
    return PriceSeries(np.array(timestamps), np.array(prices))


def _parse_epoch(text, row_no: int, col: str) -> int:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ParseError(row_no, col, f"not an epoch-seconds value: {text!r}")
    if not np.isfinite(value) or value != int(value):
        raise ParseError(row_no, col, f"not whole epoch seconds: {text!r}")
    return int(value)


def log_returns(series: PriceSeries, step: int) -> tuple[np.ndarray, np.ndarray]:
    """Log returns on the regular ``step``-second grid.

    Only prices whose timestamps land exactly on the grid participate.
    Returns (values, observed): slot i carries ln(p[t0+(i+1)step] /
    p[t0+i*step]) where both prices exist; elsewhere values[i] is nan
    and observed[i] is False.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    t0 = int(series.timestamps[0])
    offsets = series.timestamps - t0
    on_grid = offsets % step == 0
    slots = offsets[on_grid] // step
    n_slots = int(slots[-1]) + 1 if slots.size else 0
    price_at = np.full(n_slots, np.nan)
    price_at[slots] = series.prices[on_grid]
    have = ~np.isnan(price_at)
    observed = have[:-1] & have[1:]
    values = np.full(max(n_slots - 1, 0), np.nan)
    with np.errstate(invalid="ignore"):
        ratio = price_at[1:] / price_at[:-1]
    values[observed] = np.log(ratio[observed])
    return values, observed


@dataclass(frozen=True)
class ReturnWindow:
    """One fixed-length block of increments after gap filling."""

    window_id: str
    increments: IncrementSeries
    fill_fraction: float
    scale: float
    start_time: int

    @property
    def gap_flagged(self) -> bool:
        # Majority-resampled windows are suspect for inference.
        return self.fill_fraction > 0.5


def make_windows(
    values: np.ndarray,
    observed: np.ndarray,
    n_t: int,
    seed: SeedSpec,
    t0: int = 0,
    step: int = 60,
) -> list[ReturnWindow]:
    """Cut slot-aligned increments into consecutive disjoint windows.

    Missing slots are filled by resampling (with replacement) from the
    same window's observed increments; no partial trailing window is
    emitted. The fill uses one stream per window, so window order never
    affects the values.
    """
    if n_t < 1:
        raise ValueError("n_t must be >= 1")
    total = values.shape[0]
    count = total // n_t
    windows = []
    for w in range(count):
        sl = slice(w * n_t, (w + 1) * n_t)
        vals = values[sl].copy()
        obs = observed[sl]
        pool = vals[obs]
        if pool.size == 0:
            raise EmptyWindow(f"window {w} has no observed increments")
        missing = int(n_t - pool.size)
        if missing:
            rng = stream_rng(seed, w)
            vals[~obs] = rng.choice(pool, size=missing, replace=True)
        scale = float(np.std(vals, ddof=1)) if n_t > 1 else 0.0
        start = t0 + w * n_t * step
        windows.append(
            ReturnWindow(
                window_id=_window_id(w, start, n_t, step),
                increments=IncrementSeries(vals),
                fill_fraction=missing / n_t,
                scale=scale,
                start_time=start,
            )
        )
    return windows


def _window_id(index: int, start: int, n_t: int, step: int) -> str:
    if n_t * step == 86_400 and start % 86_400 == 0:
        return datetime.fromtimestamp(start, tz=timezone.utc).strftime("%Y-%m-%d")
    return f"w{index:05d}"


class RescaleMode(str, Enum):
    VARIANCE = "var"  # variance coordinates pick up scale^2
    SD = "sd"  # variance coordinates multiplied by the plain SD


def rescaled_estimate(
    est: DeepSetsEstimator,
    window: ReturnWindow,
    mode: RescaleMode = RescaleMode.VARIANCE,
) -> ParamVector:
    """Estimate on the SD-normalized window, then undo the normalization.

    Normalizing each window to unit standard deviation keeps low-variance
    regimes inside the training prior's well-covered region. In ``var``
    mode every coordinate picks up the power of the data scale it
    carries (variance-like coordinates scale quadratically, drift-like
    linearly, shape-like not at all); ``sd`` mode multiplies the
    variance-like coordinates by the plain standard deviation instead.
    """
    if len(window.increments) != est.input_len:
        raise InputLengthMismatch(
            f"window length {len(window.increments)} != input {est.input_len}"
        )
    normalized = normalized_window(window)
    raw = est.forward_batch(normalized[None, :])[0]
    factors = rescale_factors(est, window, mode)
    return ParamVector(raw * factors, est.output_box.model)


def normalized_window(window: ReturnWindow) -> np.ndarray:
    if window.scale <= 0.0:
        raise ZeroScale(f"window {window.window_id} has zero empirical SD")
    return window.increments.values / window.scale


def rescale_factors(
    est: DeepSetsEstimator, window: ReturnWindow, mode: RescaleMode
) -> np.ndarray:
    """Per-coordinate multipliers applied after estimating on the
    normalized window (positive, so interval endpoints transform too)."""
    if window.scale <= 0.0:
        raise ZeroScale(f"window {window.window_id} has zero empirical SD")
    powers = np.array(est.output_box.model.scale_powers, dtype=np.float64)
    if mode is RescaleMode.VARIANCE:
        return window.scale**powers
    return np.where(powers == 2, window.scale, 1.0)


def write_increments_csv(path, series: IncrementSeries) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("increment\n")
        for v in series.values:
            fh.write(f"{v:.17g}\n")


def read_increments_csv(path) -> IncrementSeries:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0].strip() != "increment":
            raise ParseError(0, "increment", "missing 'increment' header")
        values = []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                raise ParseError(row_no, "increment", f"not a number: {row[0]!r}")
    return IncrementSeries(np.array(values))


def write_increments_bin(path, series: IncrementSeries) -> None:
    """Binary dataset container: versioned NPZ with one float64 vector."""
    np.savez(
        path,
        format_version=np.int64(INCREMENT_FORMAT_VERSION),
        increments=series.values.astype("<f8"),
    )


def read_increments_bin(path) -> IncrementSeries:
    with np.load(path) as blob:
        version = int(blob["format_version"])
        if version != INCREMENT_FORMAT_VERSION:
            raise ParseError(0, "format_version", f"unsupported version {version}")
        return IncrementSeries(blob["increments"].astype(np.float64))


def read_increments(path) -> IncrementSeries:
    text = str(path)
    if text.endswith(".npz"):
        return read_increments_bin(path)
    return read_increments_csv(path)


def write_increments(path, series: IncrementSeries) -> None:
    text = str(path)
    if text.endswith(".npz"):
        write_increments_bin(path, series)
    else:
        write_increments_csv(path, series)
