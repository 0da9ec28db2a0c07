"""Classical characteristic-function estimators.

Two baselines operating on the empirical characteristic function (ECF)
of the observed increments:

* LSQ: minimize the summed squared modulus distance between the ECF and
  the model characteristic function over a frequency grid.
* MELE: maximum empirical likelihood under the moment conditions
  E[exp(i w X) - cf(w, theta)] = 0, profiled over theta with the inner
  weight problem solved in its convex dual form.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import DualInfeasible
from .models import (
    IncrementSeries,
    ModelSpec,
    ParamVector,
    PriorBox,
    SeedSpec,
    char_fn,
    stream_rng,
)
from .optimize import BoxTransform, nelder_mead

_ECF_CHUNK = 200_000


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing, nonzero evaluation frequencies."""

    omegas: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omegas, dtype=np.float64)
        if w.ndim != 1 or w.shape[0] < 1:
            raise ValueError("frequency grid must be a nonempty 1-d vector")
        if not np.all(np.isfinite(w)):
            raise ValueError("frequencies must be finite")
        if np.any(w == 0.0):
            raise ValueError("frequencies must be nonzero")
        if np.any(np.diff(w) <= 0.0):
            raise ValueError("frequencies must be strictly increasing")
        object.__setattr__(self, "omegas", w)

    def __len__(self) -> int:
        return self.omegas.shape[0]


@dataclass(frozen=True)
class EcfTable:
    """ECF values aligned with a frequency grid."""

    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != (len(self.grid),):
            raise ValueError("values must align with the grid")
        if np.any(np.abs(v) > 1.0 + 1e-12):
            raise ValueError("ECF modulus cannot exceed 1")
        object.__setattr__(self, "values", v)


@dataclass
class FitResult:
    estimate: ParamVector
    objective: float
    iterations: int
    converged: bool
    wall_time: float

    def to_json_dict(self) -> dict:
        return {
            "model": self.estimate.model.tag(),
            "estimate": [float(x) for x in self.estimate.values],
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "wall_time_s": self.wall_time,
        }


def ecf(data: IncrementSeries, grid: FrequencyGrid) -> EcfTable:
    """Empirical characteristic function: mean of exp(i w X) per frequency."""
    x = data.values
    return EcfTable(grid, _ecf_values(x, grid.omegas))


def _ecf_values(x: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    acc = np.zeros(omegas.shape[0], dtype=np.complex128)
    for start in range(0, n, _ECF_CHUNK):
        chunk = x[start : start + _ECF_CHUNK]
        acc += np.exp(1j * np.outer(chunk, omegas)).sum(axis=0)
    return acc / n


def default_grid(data: IncrementSeries, count: int) -> FrequencyGrid:
    """Equally spaced frequencies on (0, w_max].

    w_max is the first rung of a fixed 0.25-spaced ladder where the ECF
    modulus drops below 0.05, clamped into [1, 200]. Frequencies past
    the decay of the ECF carry noise only, so the grid stops there.
    """
    if count < 2:
        raise ValueError("count must be >= 2")
    w_max = _scan_ecf_decay(data.values)
    k = np.arange(1, count + 1, dtype=np.float64)
    return FrequencyGrid(w_max * k / count)


_LADDER_STEP = 0.25
_LADDER_MAX = 200.0
_DECAY_LEVEL = 0.05


def _scan_ecf_decay(x: np.ndarray) -> float:
    # Walk the ladder by repeated phase multiplication: exp(i k d x) is
    # exp(i d x)^k, so one exp per data point covers every rung.
    n_rungs = int(round(_LADDER_MAX / _LADDER_STEP))
    z = np.exp(1j * _LADDER_STEP * x)
    p = np.ones_like(z)
    w_max = _LADDER_MAX
    for k in range(1, n_rungs + 1):
        p *= z
        if abs(p.mean()) < _DECAY_LEVEL:
            w_max = k * _LADDER_STEP
            break
    return min(max(w_max, 1.0), _LADDER_MAX)


def lsq_objective(params: ParamVector, ecf_table: EcfTable) -> float:
    """Sum of squared moduli of CF-vs-ECF differences over the grid."""
    model_cf = char_fn(params, ecf_table.grid.omegas)
    diff = model_cf - ecf_table.values
    return float(np.sum(diff.real**2 + diff.imag**2))


def lsq_fit(
    data: IncrementSeries,
    model: ModelSpec,
    box: PriorBox,
    grid: FrequencyGrid,
    restarts: int,
    seed: SeedSpec,
) -> FitResult:
    """Minimize the LSQ objective by multi-start simplex search.

    Starts are drawn uniformly inside the box; the search runs in the
    logit-transformed coordinates, so every candidate stays inside the
    box. Ties between restarts break by objective, then restart index.
    """
    if len(grid) < 1:
        raise ValueError("grid must be nonempty")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    t0 = time.perf_counter()
    table = ecf(data, grid)
    transform = BoxTransform(box.lower, box.upper)

    def objective(z: np.ndarray) -> float:
        return lsq_objective(ParamVector(transform.to_box(z), model), table)

    rng = stream_rng(seed)
    best = None
    for _ in range(restarts):
        start = box.lower + rng.random(model.dim) * box.width
        res = nelder_mead(objective, transform.to_unconstrained(start))
        if best is None or res.fval < best.fval:
            best = res
    estimate = ParamVector(transform.to_box(best.x), model)
    return FitResult(
        estimate, best.fval, best.iterations, best.converged, time.perf_counter() - t0
    )


def _phase_table(data: IncrementSeries, grid: FrequencyGrid) -> np.ndarray:
    """Stacked real/imaginary parts of exp(i w X), shape (n, 2K).

    Theta-independent, so profile searches compute it once per dataset.
    """
    e = np.exp(1j * np.outer(data.values, grid.omegas))
    return np.concatenate([e.real, e.imag], axis=1)


def _conditions_from_table(
    table: np.ndarray, params: ParamVector, grid: FrequencyGrid
) -> np.ndarray:
    cf = char_fn(params, grid.omegas)
    return table - np.concatenate([cf.real, cf.imag])


def moment_conditions(
    data: IncrementSeries, params: ParamVector, grid: FrequencyGrid
) -> np.ndarray:
    """Stacked real/imaginary CF moment conditions, shape (n, 2K)."""
    return _conditions_from_table(_phase_table(data, grid), params, grid)


def el_dual_solve(
    g: np.ndarray,
    max_iter: int = 80,
    grad_tol: float = 1e-11,
    lam0: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Solve the inner empirical-likelihood problem in dual form.

    Finds the multiplier at which sum(g_i / (1 + lam.g_i)) vanishes by
    damped Newton ascent of the concave dual criterion, with step
    halving to keep every 1 + lam.g_i above 1/n (so all implied weights
    stay in (0, 1)). Returns (lam, weights). ``lam0`` warm starts the
    ascent (profile searches pass the previous multiplier).

    Raises DualInfeasible when no interior stationary point exists,
    which happens exactly when the convex hull of the g_i excludes the
    origin.
    """
    n, m = g.shape
    floor = 1.0 / n
    lam = np.zeros(m)
    if lam0 is not None and lam0.shape == (m,):
        cand = 1.0 + g @ lam0
        if np.all(cand > floor):
            lam = lam0.copy()
    s = 1.0 + g @ lam
    best_norm = np.inf
    stalls = 0
    for _ in range(max_iter):
        w = 1.0 / s
        grad = g.T @ w
        gnorm = float(np.max(np.abs(grad))) / n
        # A vanishing gradient alone does not certify an interior
        # optimum: a runaway multiplier (hull excludes the origin) also
        # flattens it, but there the implied weights no longer sum to 1.
        at_optimum = abs(float(w.sum()) / n - 1.0) <= 1e-8
        if gnorm <= grad_tol and at_optimum:
            return lam, w / n
        # The float64 floor of the gradient norm can sit above grad_tol
        # for large n; accept the numerical optimum once progress stops
        # at a still-tight norm.
        if gnorm >= best_norm * 0.999:
            stalls += 1
            if stalls >= 3:
                if gnorm <= 1e-8 and at_optimum:
                    return lam, w / n
                raise DualInfeasible(f"dual ascent stalled at |grad|/n={gnorm:.2e}")
        else:
            best_norm = gnorm
            stalls = 0
        gw = g * w[:, None]
        hess = gw.T @ gw
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise DualInfeasible("singular dual curvature")
        # Ascent with halving until the weight floor holds and the
        # criterion does not decrease.
        f_cur = float(np.sum(np.log(s)))
        scale = 1.0
        for _ in range(50):
            cand = lam + scale * step
            s_cand = 1.0 + g @ cand
            if np.all(s_cand > floor):
                f_cand = float(np.sum(np.log(s_cand)))
                if f_cand >= f_cur - 1e-14:
                    lam, s = cand, s_cand
                    break
            scale *= 0.5
        else:
            raise DualInfeasible("step halving stalled at the weight floor")
    raise DualInfeasible("dual Newton did not converge")


def el_ratio_statistic(g: np.ndarray, lam0: np.ndarray | None = None) -> float:
    """-2 log empirical likelihood ratio for the given conditions."""
    lam, _ = el_dual_solve(g, lam0=lam0)
    if lam0 is not None:
        lam0[...] = lam
    return float(2.0 * np.sum(np.log1p(g @ lam)))


def mele_fit(
    data: IncrementSeries,
    model: ModelSpec,
    box: PriorBox,
    grid: FrequencyGrid,
    seed: SeedSpec,
) -> FitResult:
    """Profile the empirical log-likelihood over theta.

    The outer simplex search minimizes the EL ratio statistic; thetas
    whose moment conditions are dual-infeasible score +inf and the
    search steps around them. One start reuses the LSQ estimate (the
    interior point most likely to be feasible); one more is drawn from
    the prior.
    """
    n = len(data)
    if n <= 2 * len(grid):
        raise ValueError(
            f"need more than {2 * len(grid)} increments for {len(grid)} "
            f"frequencies, got {n}"
        )
    t0 = time.perf_counter()
    transform = BoxTransform(box.lower, box.upper)
    table = _phase_table(data, grid)
    lam_carry = np.zeros(2 * len(grid))

    def objective(z: np.ndarray) -> float:
        params = ParamVector(transform.to_box(z), model)
        g = _conditions_from_table(table, params, grid)
        try:
            return el_ratio_statistic(g, lam0=lam_carry)
        except DualInfeasible:
            return np.inf

    warm = lsq_fit(data, model, box, grid, restarts=3, seed=seed)
    rng = stream_rng(seed, 1)
    starts = [
        warm.estimate.values,
        box.lower + rng.random(model.dim) * box.width,
    ]
    best = None
    for start in starts:
        res = nelder_mead(objective, transform.to_unconstrained(start))
        if best is None or res.fval < best.fval:
            best = res
    estimate = ParamVector(transform.to_box(best.x), model)
    return FitResult(
        estimate, best.fval, best.iterations, best.converged, time.perf_counter() - t0
    )


def el_weights(
    data: IncrementSeries, params: ParamVector, grid: FrequencyGrid
) -> np.ndarray:
    """Implied empirical-likelihood weights at a fixed theta."""
    g = moment_conditions(data, params, grid)
    _, w = el_dual_solve(g)
    return w
