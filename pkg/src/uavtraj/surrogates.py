"""First-order surrogate bounds used by the convex subproblems.

Every helper here returns an affine (or affine-in-the-lifted-variable)
function together with the guarantee that makes successive convex
approximation sound:

* ``rate_surrogate``: the interference-free rate as a function of squared
  horizontal distance x is convex and decreasing, so its tangent at any
  expansion point is a global lower bound that is tight at the point.
* ``norm_sq_tangent``: ||x||^2 is convex, so its tangent is a global lower
  bound; used to bound squared distances (and squared speeds) from below.
* ``total_signal_log_tangent``: log2(noise + sum_j c_j/(h2_j + x_j)) is
  jointly convex in the squared-distance vector x, so its tangent is a
  global lower bound.
* ``log_affine_tangent``: log2(offset + w.p) is concave in p, so its
  tangent is a global upper bound; subtracting it keeps rate surrogates
  concave in the power block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)


@dataclass(frozen=True)
class SurrogateRate:
    """Affine lower bound r(x) ~ constant + slope * x on the link rate,
    with x the squared horizontal distance; slope <= 0, tight at the
    expansion point."""

    expansion_sq_distance: float
    constant: float
    slope: float

    def evaluate(self, sq_distance):
        return self.constant + self.slope * np.asarray(sq_distance, dtype=float)


def rate_surrogate_arrays(gamma0: float, altitude_sq: float, x_ref):
    """Vectorized tangent coefficients of log2(1 + gamma0/(h^2 + x)).

    Returns (constant, slope) arrays shaped like x_ref with

        rate(x) >= constant + slope * x   for all x >= 0,
        equality at x = x_ref.
    """
    x_ref = np.asarray(x_ref, dtype=float)
    denom = altitude_sq + x_ref
    value = np.log2(1.0 + gamma0 / denom)
    slope = -gamma0 / (LN2 * denom * (denom + gamma0))
    return value - slope * x_ref, slope


def rate_surrogate(gamma0: float, altitude_sq: float,
                   expansion_sq_distance: float) -> SurrogateRate:
    const, slope = rate_surrogate_arrays(gamma0, altitude_sq,
                                         expansion_sq_distance)
    return SurrogateRate(expansion_sq_distance=float(expansion_sq_distance),
                         constant=float(const), slope=float(slope))


@dataclass(frozen=True)
class NormSqTangent:
    """Affine global lower bound on ||x||^2, tight at the reference point:
    ||x||^2 >= ||r||^2 + 2 r . (x - r) = coeff . x + offset."""

    reference: np.ndarray

    def __post_init__(self):
        r = np.ascontiguousarray(self.reference, dtype=float)
        r.setflags(write=False)
        object.__setattr__(self, "reference", r)

    @property
    def coeff(self) -> np.ndarray:
        return 2.0 * self.reference

    @property
    def offset(self) -> float:
        return -float(self.reference @ self.reference)

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.coeff @ x) + self.offset


def norm_sq_tangent(reference) -> NormSqTangent:
    return NormSqTangent(reference=np.asarray(reference, dtype=float))


def total_signal_log_tangent(coeffs, altitude_sq, noise: float, x_ref):
    """Tangent of A(x) = log2(noise + sum_j coeffs[j]/(altitude_sq[j] + x[j])).

    A is convex in x: writing u_j = c_j/(h2_j + x_j), each u_j has
    u_j'^2 / u_j'' = u_j / 2, so sum_j u_j'^2/u_j'' <= sum_j u_j and the
    Cauchy-Schwarz bound on the Hessian's rank-one part shows
    d^2A >= 0 (the property tests also check the bound numerically).  Hence

        A(x) >= constant + grad . x   for all x > -altitude_sq,

    with equality at x_ref.  Returns (value_at_ref, grad, constant) where
    constant = value_at_ref - grad . x_ref and grad <= 0 elementwise.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    altitude_sq = np.asarray(altitude_sq, dtype=float)
    x_ref = np.asarray(x_ref, dtype=float)
    denom = altitude_sq + x_ref
    inner = noise + np.sum(coeffs / denom, axis=-1)
    value = np.log2(inner)
    grad = -coeffs / (LN2 * denom ** 2 * inner[..., None])
    constant = value - np.sum(grad * x_ref, axis=-1)
    return value, grad, constant


def log_affine_tangent(weights, offset, p_ref):
    """Tangent of B(p) = log2(offset + weights . p), concave in p.

        B(p) <= constant + grad . p   for all feasible p,

    equality at p_ref.  Returns (value_at_ref, grad, constant)."""
    weights = np.asarray(weights, dtype=float)
    p_ref = np.asarray(p_ref, dtype=float)
    inner = offset + np.sum(weights * p_ref, axis=-1)
    value = np.log2(inner)
    grad = weights / (LN2 * inner[..., None])
    constant = value - np.sum(grad * p_ref, axis=-1)
    return value, grad, constant
