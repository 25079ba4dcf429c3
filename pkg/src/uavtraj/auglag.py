"""Self-contained first-order solver for the convex SCA subproblems.

Problems arrive in maximization form

    maximize f(x)  s.t.  g_b(x) >= 0 (ineq blocks), h_b(x) = 0 (eq blocks),
                         lower <= x <= upper,

with callable objective/constraint values and vector-Jacobian products.
The solver runs a classic augmented-Lagrangian outer loop (PHR multiplier
updates, penalty growth when feasibility stalls) around a box-constrained
quasi-Newton inner minimization.  All subproblems handed to it are convex,
so the first-order stationarity check certifies global optimality within
tolerance.

Callers are expected to scale constraints to O(1) so that the shared
feasibility tolerance is meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize


@dataclass(frozen=True)
class ConstraintBlock:
    """A named group of constraints sharing one vectorized evaluator.

    value(x) returns the residual vector (g for ineq blocks, h for eq
    blocks); vjp(x, w) returns sum_i w_i * grad residual_i(x).
    """

    name: str
    kind: str  # "ineq" (residual >= 0) or "eq" (residual == 0)
    dim: int
    value: Callable[[np.ndarray], np.ndarray]
    vjp: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.kind not in ("ineq", "eq"):
            raise ValueError(f"constraint kind must be 'ineq' or 'eq', "
                             f"got {self.kind!r}")


@dataclass
class SubproblemSpec:
    n_vars: int
    objective: Callable[[np.ndarray], tuple[float, np.ndarray]]  # maximized
    constraints: list[ConstraintBlock] = field(default_factory=list)
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None


@dataclass(frozen=True)
class Tolerances:
    """Shared solve tolerances; the defaults are used everywhere."""

    tol_kkt: float = 1e-6       # projected stationarity of the Lagrangian
    tol_feas: float = 1e-8      # max scaled constraint violation
    tol_monotone: float = 1e-6  # never return worse than warm start by more
    max_outer: int = 40
    max_inner: int = 3000
    mu0: float = 10.0
    mu_growth: float = 8.0
    mu_max: float = 1e12

    def as_dict(self) -> dict:
        return {"tol_kkt": self.tol_kkt, "tol_feas": self.tol_feas,
                "tol_monotone": self.tol_monotone}


@dataclass
class SubproblemSolution:
    x: np.ndarray
    objective: float
    status: str                  # "optimal" | "max-iter" | "infeasible"
    stationarity: float          # projected Lagrangian gradient, inf norm
    max_violation: float
    outer_iters: int
    inner_iters: int
    multipliers: dict[str, np.ndarray] = field(default_factory=dict)
    used_fallback: bool = False


class SubproblemInfeasibleError(RuntimeError):
    """The augmented-Lagrangian loop could not restore feasibility."""


def _bounds_list(spec: SubproblemSpec):
    if spec.lower is None and spec.upper is None:
        return None
    lo = np.full(spec.n_vars, -np.inf) if spec.lower is None else spec.lower
    hi = np.full(spec.n_vars, np.inf) if spec.upper is None else spec.upper
    return list(zip(lo, hi))


def _violation(block: ConstraintBlock, residual: np.ndarray) -> float:
    if block.kind == "eq":
        return float(np.abs(residual).max(initial=0.0))
    return float(np.maximum(0.0, -residual).max(initial=0.0))


def _project(x: np.ndarray, spec: SubproblemSpec) -> np.ndarray:
    if spec.lower is not None:
        x = np.maximum(x, spec.lower)
    if spec.upper is not None:
        x = np.minimum(x, spec.upper)
    return x


def solve_convex_subproblem(spec: SubproblemSpec, warm_start,
                            tol: Tolerances = Tolerances(),
                            initial_multipliers: dict | None = None
                            ) -> SubproblemSolution:
    """Maximize the spec objective from a feasible warm start.

    The returned point never scores worse than the warm start by more than
    tol.tol_monotone: every outer iterate (including the warm start) is a
    fallback candidate, ranked by objective among near-feasible points.
    Passing the previous solve's multipliers back in cuts the outer loop to
    a couple of rounds when the active set is stable (SCA step sequences).
    """
    x = _project(np.asarray(warm_start, dtype=float).copy(), spec)
    if x.shape != (spec.n_vars,):
        raise ValueError(f"warm start has shape {x.shape}, "
                         f"expected ({spec.n_vars},)")
    blocks = spec.constraints
    lam = {b.name: np.zeros(b.dim) for b in blocks}  # ineq and eq together
    if initial_multipliers:
        for b in blocks:
            m = initial_multipliers.get(b.name)
            if m is not None and np.shape(m) == (b.dim,):
                m = np.asarray(m, dtype=float)
                if b.kind == "ineq":
                    m = np.maximum(0.0, m)
                lam[b.name] = m.copy()
    mu = tol.mu0
    bounds = _bounds_list(spec)

    def al_value_grad(z: np.ndarray):
        f, gf = spec.objective(z)
        val = -f
        grad = -gf
        for b in blocks:
            r = b.value(z)
            m = lam[b.name]
            if b.kind == "eq":
                val += float(m @ r) + 0.5 * mu * float(r @ r)
                grad += b.vjp(z, m + mu * r)
            else:
                shifted = np.maximum(0.0, m - mu * r)
                val += float(shifted @ shifted - m @ m) / (2.0 * mu)
                grad += b.vjp(z, -shifted)
        return val, grad

    def lagrangian_stationarity(z: np.ndarray) -> float:
        _, gf = spec.objective(z)
        grad = -gf
        for b in blocks:
            m = lam[b.name]
            grad += b.vjp(z, m if b.kind == "eq" else -m)
        step = _project(z - grad, spec)
        return float(np.abs(z - step).max(initial=0.0))

    def feasibility(z: np.ndarray) -> float:
        return max((_violation(b, b.value(z)) for b in blocks), default=0.0)

    # fallback candidates: (objective, x, stationarity, violation)
    f0, _ = spec.objective(x)
    viol0 = feasibility(x)
    best = (float(f0), x.copy(), math.inf, viol0)

    status = "max-iter"
    stationarity = math.inf
    max_violation = viol0
    inner_total = 0
    prev_violation = math.inf
    outer = 0
    omega = 3e-3  # inner stationarity target, tightened each round
    stat_best = math.inf
    stall = 0

    for outer in range(1, tol.max_outer + 1):
        res = minimize(al_value_grad, x, jac=True, method="L-BFGS-B",
                       bounds=bounds,
                       options={"maxiter": tol.max_inner, "ftol": 1e-18,
                                "gtol": omega, "maxls": 60, "maxcor": 20})
        x = _project(np.asarray(res.x, dtype=float), spec)
        inner_total += int(res.nit)

        residuals = {b.name: b.value(x) for b in blocks}
        max_violation = max((_violation(b, residuals[b.name]) for b in blocks),
                            default=0.0)
        for b in blocks:
            r = residuals[b.name]
            if b.kind == "eq":
                lam[b.name] = lam[b.name] + mu * r
            else:
                lam[b.name] = np.maximum(0.0, lam[b.name] - mu * r)
        stationarity = lagrangian_stationarity(x)

        f_cur, _ = spec.objective(x)
        if max_violation <= tol.tol_feas and (
                best[3] > tol.tol_feas or f_cur > best[0]):
            best = (float(f_cur), x.copy(), stationarity, max_violation)

        if max_violation <= tol.tol_feas and stationarity <= tol.tol_kkt:
            status = "optimal"
            break
        # Stop burning rounds once feasible but stationarity has flatlined;
        # the caller still gets the best feasible iterate seen so far.
        if max_violation <= tol.tol_feas:
            stall = stall + 1 if stationarity > 0.7 * stat_best else 0
            stat_best = min(stat_best, stationarity)
            if stall >= 3:
                break
        if max_violation > 0.25 * prev_violation and max_violation > tol.tol_feas:
            mu = min(mu * tol.mu_growth, tol.mu_max)
        prev_violation = max_violation
        omega = max(tol.tol_kkt, 0.2 * omega)

    f_final, _ = spec.objective(x)
    if status != "optimal" and max_violation > max(1e3 * tol.tol_feas, 1e-6):
        if best[3] <= tol.tol_feas:
            # keep the best feasible iterate instead of the diverged one
            f_final, x, stationarity, max_violation = best
            status = "max-iter"
            used_fallback = True
            return SubproblemSolution(
                x=x, objective=float(f_final), status=status,
                stationarity=stationarity, max_violation=max_violation,
                outer_iters=outer, inner_iters=inner_total,
                multipliers=lam, used_fallback=used_fallback)
        raise SubproblemInfeasibleError(
            f"augmented-Lagrangian loop stalled at violation "
            f"{max_violation:.3e} after {outer} rounds (mu={mu:.1e})")

    used_fallback = False
    if best[0] > f_final + 1e-12 and best[3] <= max(max_violation, tol.tol_feas):
        f_final, x, stationarity, max_violation = best
        used_fallback = True
        if status == "optimal" and stationarity > tol.tol_kkt:
            status = "max-iter"
    return SubproblemSolution(
        x=x, objective=float(f_final), status=status,
        stationarity=stationarity, max_violation=max_violation,
        outer_iters=outer, inner_iters=inner_total,
        multipliers=lam, used_fallback=used_fallback)
