"""Levy process models: exact unit-time increment simulators and
characteristic functions.

Four models are supported:

* compound Poisson (``cp``): normal jumps arriving at Poisson times,
  parameters (lambda, mu, sigma2);
* Merton jump diffusion (``merton``): Brownian motion plus compound
  Poisson jumps, parameters (mu, sigma2, lambda, mu_j, sigma2_j);
* variance gamma (``vg``): Brownian motion with drift run on a
  unit-mean gamma clock, parameters (gamma, sigma2, alpha) where alpha
  is the variance of the clock at unit time;
* deep variance gamma (``dvg:L``): driftless Brownian motion run on a
  composition of L independent unit-mean gamma clocks, parameters
  (sigma2, alpha_1, ..., alpha_L).

All models are simulated from their exact unit-time increment law, so
there is no discretization error. The time step is fixed at 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import GammaShapeUnderflow

# Gamma shapes below this are indistinguishable from a point mass at
# zero in float64; sampling them silently returns 0.0.
GAMMA_SHAPE_FLOOR = 1e-12


class ModelKind(str, Enum):
    COMPOUND_POISSON = "cp"
    MERTON = "merton"
    VARIANCE_GAMMA = "vg"
    DEEP_VARIANCE_GAMMA = "dvg"


_PARAM_NAMES = {
    ModelKind.COMPOUND_POISSON: ("lambda", "mu", "sigma2"),
    ModelKind.MERTON: ("mu", "sigma2", "lambda", "mu_j", "sigma2_j"),
    ModelKind.VARIANCE_GAMMA: ("gamma", "sigma2", "alpha"),
}

# Coordinates that must be strictly positive, per model.
_POSITIVE = {
    ModelKind.COMPOUND_POISSON: (True, False, True),
    ModelKind.MERTON: (False, True, True, False, True),
    ModelKind.VARIANCE_GAMMA: (False, True, True),
}

# Power of the data scale c carried by each coordinate when the
# increments are multiplied by c (used by the rescaling pipeline).
_SCALE_POWER = {
    ModelKind.COMPOUND_POISSON: (0, 1, 2),
    ModelKind.MERTON: (1, 2, 0, 1, 2),
    ModelKind.VARIANCE_GAMMA: (1, 2, 0),
}


@dataclass(frozen=True)
class ModelSpec:
    """Which Levy model, plus the subordination depth for deep VG."""

    kind: ModelKind
    levels: int | None = None

    def __post_init__(self):
        if self.kind is ModelKind.DEEP_VARIANCE_GAMMA:
            if self.levels is None or self.levels < 1:
                raise ValueError("deep variance gamma requires levels >= 1")
        elif self.levels is not None:
            raise ValueError(f"{self.kind.value} carries no level count")

    @property
    def dim(self) -> int:
        if self.kind is ModelKind.DEEP_VARIANCE_GAMMA:
            return 1 + self.levels
        return len(_PARAM_NAMES[self.kind])

    @property
    def param_names(self) -> tuple[str, ...]:
        if self.kind is ModelKind.DEEP_VARIANCE_GAMMA:
            return ("sigma2",) + tuple(f"alpha{k}" for k in range(1, self.levels + 1))
        return _PARAM_NAMES[self.kind]

    @property
    def positive_mask(self) -> tuple[bool, ...]:
        if self.kind is ModelKind.DEEP_VARIANCE_GAMMA:
            return (True,) * self.dim
        return _POSITIVE[self.kind]

    @property
    def scale_powers(self) -> tuple[int, ...]:
        """Exponent of the data scale carried by each coordinate."""
        if self.kind is ModelKind.DEEP_VARIANCE_GAMMA:
            return (2,) + (0,) * self.levels
        return _SCALE_POWER[self.kind]

    def tag(self) -> str:
        if self.kind is ModelKind.DEEP_VARIANCE_GAMMA:
            return f"dvg:{self.levels}"
        return self.kind.value

    @staticmethod
    def from_tag(tag: str) -> "ModelSpec":
        if tag.startswith("dvg"):
            _, _, lev = tag.partition(":")
            if not lev:
                raise ValueError("dvg model tag must carry a level count, e.g. dvg:2")
            return ModelSpec(ModelKind.DEEP_VARIANCE_GAMMA, int(lev))
        return ModelSpec(ModelKind(tag))


def _check_values(values: np.ndarray, model: ModelSpec) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.shape[0] != model.dim:
        raise ValueError(
            f"expected {model.dim} parameters for {model.tag()}, got shape {values.shape}"
        )
    if not np.all(np.isfinite(values)):
        raise ValueError("parameter values must be finite")
    for i, (v, pos) in enumerate(zip(values, model.positive_mask)):
        if pos and v <= 0.0:
            name = model.param_names[i]
            raise ValueError(f"parameter {name} must be > 0, got {v}")
    return values


@dataclass(frozen=True)
class ParamVector:
    """An ordered parameter vector for one model."""

    values: np.ndarray
    model: ModelSpec

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.values, self.model))

    def __len__(self) -> int:
        return self.values.shape[0]

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.model.param_names, self.values)}


@dataclass(frozen=True)
class PriorBox:
    """Independent uniform prior bounds, one interval per parameter."""

    lower: np.ndarray
    upper: np.ndarray
    model: ModelSpec

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=np.float64)
        upper = np.asarray(self.upper, dtype=np.float64)
        if lower.shape != (self.model.dim,) or upper.shape != (self.model.dim,):
            raise ValueError("prior bounds must match the model dimensionality")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("prior bounds must be finite")
        if not np.all(lower < upper):
            raise ValueError("prior requires lower < upper in every coordinate")
        for i, pos in enumerate(self.model.positive_mask):
            if pos and lower[i] <= 0.0:
                raise ValueError(
                    f"lower bound of {self.model.param_names[i]} must be > 0"
                )
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, values: np.ndarray, atol: float = 0.0) -> bool:
        values = np.asarray(values, dtype=np.float64)
        return bool(
            np.all(values >= self.lower - atol) and np.all(values <= self.upper + atol)
        )

    def midpoint(self) -> ParamVector:
        return ParamVector(0.5 * (self.lower + self.upper), self.model)


def default_prior(model: ModelSpec) -> PriorBox:
    """Reasonably uninformative uniform priors for each model, matching
    the ranges used throughout the benchmark studies."""
    kind = model.kind
    if kind is ModelKind.COMPOUND_POISSON:
        return PriorBox([0.1, -0.6, 1e-3], [1.3, 0.6, 0.3], model)
    if kind is ModelKind.MERTON:
        return PriorBox([-0.8, 1e-3, 0.1, -1.5, 0.1], [0.8, 1.0, 1.5, 1.5, 1.7], model)
    if kind is ModelKind.VARIANCE_GAMMA:
        return PriorBox([-1.5, 1e-4, 0.1], [1.5, 2.0, 3.0], model)
    lo = [1e-6] + [1e-6] * model.levels
    hi = [3.0] + [25.0] * model.levels
    return PriorBox(lo, hi, model)


@dataclass(frozen=True)
class IncrementSeries:
    """A replicate dataset of i.i.d. unit-time increments.

    The entries are exchangeable by construction; no ordering semantics
    attach to the index.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] < 1:
            raise ValueError("increment series must be a nonempty 1-d vector")
        if not np.all(np.isfinite(values)):
            raise ValueError("increments must be finite")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SeedSpec:
    """(root seed, stream id) pair defining one independent random stream."""

    root_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("root_seed", "stream_id"):
            v = getattr(self, name)
            if not (0 <= int(v) < 2**64):
                raise ValueError(f"{name} must be an unsigned 64-bit integer")


def stream_rng(seed: SeedSpec, *path: int) -> np.random.Generator:
    """Derive a generator for (seed, sub-path).

    The sub-path extends the stream id so that independent consumers
    (parameter draws, per-replicate simulation, weight init, shuffles)
    never share a stream and the layout is order-independent.
    """
    ss = np.random.SeedSequence(
        entropy=int(seed.root_seed), spawn_key=(int(seed.stream_id), *path)
    )
    return np.random.Generator(np.random.PCG64(ss))


def sample_prior(prior: PriorBox, count: int, seed: SeedSpec) -> list[ParamVector]:
    """Draw ``count`` parameter vectors uniformly from the prior box."""
    if count < 1:
        raise ValueError("count must be >= 1")
    draws = sample_prior_array(prior, count, seed)
    return [ParamVector(row, prior.model) for row in draws]

def sample_prior_array(prior: PriorBox, count: int, seed: SeedSpec) -> np.ndarray:
    """Array-valued variant of :func:`sample_prior`, shape (count, dim)."""
    rng = stream_rng(seed)
    u = rng.random((count, prior.model.dim))
    return prior.lower + u * prior.width


def simulate_increments(params: ParamVector, n: int, seed: SeedSpec) -> IncrementSeries:
    """Simulate the n-1 unit-time increments of an n-point observation.

    Sampling is exact for every model. Raises GammaShapeUnderflow when a
    deep VG intermediate clock value drives a gamma shape below the
    representable floor (the caller may retry with a fresh stream).
    """
    if n < 2:
        raise ValueError("n must be >= 2 (produces n - 1 increments)")
    rng = stream_rng(seed)
    return IncrementSeries(simulate_increments_array(params, n - 1, rng))


def simulate_increments_array(
    params: ParamVector, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``count`` i.i.d. unit-time increments using ``rng`` directly."""
    v = params.values
    kind = params.model.kind
    if kind is ModelKind.COMPOUND_POISSON:
        lam, mu, sigma2 = v
        counts = rng.poisson(lam, count)
        z = rng.standard_normal(count)
        # Sum of N normal jumps given N is N(N*mu, N*sigma2).
        return counts * mu + np.sqrt(sigma2 * counts) * z
    if kind is ModelKind.MERTON:
        mu, sigma2, lam, mu_j, sigma2_j = v
        z0 = rng.standard_normal(count)
        counts = rng.poisson(lam, count)
        z1 = rng.standard_normal(count)
        jumps = counts * mu_j + np.sqrt(sigma2_j * counts) * z1
        return mu + np.sqrt(sigma2) * z0 + jumps
    if kind is ModelKind.VARIANCE_GAMMA:
        gamma_d, sigma2, alpha = v
        clock = rng.gamma(1.0 / alpha, alpha, count)
        z = rng.standard_normal(count)
        return gamma_d * clock + np.sqrt(sigma2 * clock) * z
    sigma2 = v[0]
    alphas = v[1:]
    clock = np.ones(count)
    for alpha in alphas[::-1]:
        shape = clock / alpha
        low = shape < GAMMA_SHAPE_FLOOR
        if np.any(low):
            raise GammaShapeUnderflow(
                f"gamma shape {shape[low].min():.3e} below floor "
                f"{GAMMA_SHAPE_FLOOR:g} at alpha={alpha:g}"
            )
        clock = rng.gamma(shape, alpha)
    z = rng.standard_normal(count)
    return np.sqrt(sigma2 * clock) * z


def log_char_fn(params: ParamVector, omega):
    """Characteristic exponent of the unit-time increment law.

    Accepts a scalar or an array of frequencies; returns complex values
    of the same shape. The value at 0 is exactly 0.
    """
    w = np.asarray(omega, dtype=np.float64)
    v = params.values
    kind = params.model.kind
    if kind is ModelKind.COMPOUND_POISSON:
        lam, mu, sigma2 = v
        out = lam * (np.exp(1j * mu * w - 0.5 * sigma2 * w * w) - 1.0)
    elif kind is ModelKind.MERTON:
        mu, sigma2, lam, mu_j, sigma2_j = v
        out = (
            1j * mu * w
            - 0.5 * sigma2 * w * w
            + lam * (np.exp(1j * mu_j * w - 0.5 * sigma2_j * w * w) - 1.0)
        )
    elif kind is ModelKind.VARIANCE_GAMMA:
        gamma_d, sigma2, alpha = v
        # Principal log is safe: the argument has real part >= 1.
        arg = 1.0 - 1j * gamma_d * alpha * w + 0.5 * sigma2 * alpha * w * w
        out = -np.log(arg.astype(np.complex128)) / alpha
    else:
        sigma2 = v[0]
        u = 0.5 * sigma2 * w * w
        # Fold each gamma clock's Laplace exponent over the Brownian one,
        # in the log domain so large frequencies cannot underflow.
        for alpha in v[1:]:
            u = np.log1p(alpha * u) / alpha
        out = -u.astype(np.complex128)
    if np.isscalar(omega):
        return complex(out)
    return out


def char_fn(params: ParamVector, omega):
    """Characteristic function of the unit-time increment law."""
    out = np.exp(log_char_fn(params, omega))
    if np.isscalar(omega):
        return complex(out)
    return out
