"""Derivative-free simplex search on a box, via logit reparameterization.

The box constraint is removed by mapping each coordinate through the
logit of its box-normalized value, so the simplex search runs in an
unconstrained, smooth space and every iterate maps back strictly inside
the box.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# Clip the normalized coordinate away from {0, 1} before the logit so
# box-boundary starts stay finite.
_EDGE = 1e-12


class BoxTransform:
    """Bijection between a box's interior and R^d."""

    def __init__(self, lower: np.ndarray, upper: np.ndarray):
        self.lower = np.asarray(lower, dtype=np.float64)
        self.upper = np.asarray(upper, dtype=np.float64)
        self.width = self.upper - self.lower

    def to_unconstrained(self, x: np.ndarray) -> np.ndarray:
        t = np.clip((x - self.lower) / self.width, _EDGE, 1.0 - _EDGE)
        return np.log(t) - np.log1p(-t)

    def to_box(self, z: np.ndarray) -> np.ndarray:
        t = 1.0 / (1.0 + np.exp(-z))
        return self.lower + self.width * t


@dataclass
class SimplexResult:
    x: np.ndarray
    fval: float
    iterations: int
    converged: bool


def nelder_mead(
    fn: Callable[[np.ndarray], float],
    x0: np.ndarray,
    initial_step: float = 0.5,
    diameter_tol: float = 1e-6,
    max_iter: int = 2000,
) -> SimplexResult:
    """Minimize ``fn`` from ``x0``.

    Terminates when the simplex diameter drops below ``diameter_tol`` or
    after ``max_iter`` iterations; the latter reports converged=False.
    Standard reflection/expansion/contraction/shrink coefficients.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    dim = x0.shape[0]
    verts = [x0]
    for i in range(dim):
        v = x0.copy()
        v[i] += initial_step
        verts.append(v)
    fvals = [float(fn(v)) for v in verts]

    iterations = 0
    converged = False
    while iterations < max_iter:
        order = np.argsort(fvals, kind="stable")
        verts = [verts[i] for i in order]
        fvals = [fvals[i] for i in order]

        diam = max(
            float(np.max(np.abs(v - verts[0]))) for v in verts[1:]
        )
        if diam < diameter_tol:
            converged = True
            break
        iterations += 1

        centroid = np.mean(verts[:-1], axis=0)
        worst = verts[-1]

        reflected = centroid + (centroid - worst)
        f_r = float(fn(reflected))
        if fvals[0] <= f_r < fvals[-2]:
            verts[-1], fvals[-1] = reflected, f_r
            continue
        if f_r < fvals[0]:
            expanded = centroid + 2.0 * (centroid - worst)
            f_e = float(fn(expanded))
            if f_e < f_r:
                verts[-1], fvals[-1] = expanded, f_e
            else:
                verts[-1], fvals[-1] = reflected, f_r
            continue
        if f_r < fvals[-1]:
            contracted = centroid + 0.5 * (reflected - centroid)
        else:
            contracted = centroid + 0.5 * (worst - centroid)
        f_c = float(fn(contracted))
        if f_c < min(f_r, fvals[-1]):
            verts[-1], fvals[-1] = contracted, f_c
            continue
        # Shrink toward the best vertex.
        best = verts[0]
        verts = [best] + [best + 0.5 * (v - best) for v in verts[1:]]
        fvals = [fvals[0]] + [float(fn(v)) for v in verts[1:]]

    order = np.argsort(fvals, kind="stable")
    best = verts[order[0]]
    return SimplexResult(best, float(fvals[order[0]]), iterations, converged)
