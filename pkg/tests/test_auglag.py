"""Augmented-Lagrangian subproblem solver on small closed-form problems."""

from __future__ import annotations

import numpy as np
import pytest

from uavtraj.auglag import (ConstraintBlock, SubproblemInfeasibleError,
                            SubproblemSpec, SubproblemSolution, Tolerances,
                            solve_convex_subproblem)
from uavtraj.surrogates import rate_surrogate


def quadratic_bowl(center):
    center = np.asarray(center, dtype=float)

    def objective(z):
        diff = z - center
        return -float(diff @ diff), -2.0 * diff

    return objective


# --------------------------------------------------------------------------
# Unconstrained / box-only

def test_interior_optimum_inside_norm_ball():
    # maximize -||x||^2 over ||x|| <= 1 from (0.5, 0): optimum at the origin
    ball = ConstraintBlock(
        name="ball", kind="ineq", dim=1,
        value=lambda z: np.array([1.0 - float(z @ z)]),
        vjp=lambda z, w: -2.0 * w[0] * z)
    spec = SubproblemSpec(n_vars=2, objective=quadratic_bowl([0.0, 0.0]),
                          constraints=[ball])
    sol = solve_convex_subproblem(spec, np.array([0.5, 0.0]))
    assert sol.status == "optimal"
    assert sol.x == pytest.approx([0.0, 0.0], abs=1e-6)
    assert sol.objective == pytest.approx(0.0, abs=1e-9)
    assert sol.max_violation <= 1e-8


def test_affine_objective_selects_box_corner():
    c = np.array([2.0, -3.0, 0.5])

    def objective(z):
        return float(c @ z), c.copy()

    spec = SubproblemSpec(n_vars=3, objective=objective,
                          lower=-np.ones(3), upper=np.ones(3))
    sol = solve_convex_subproblem(spec, np.zeros(3))
    assert sol.status == "optimal"
    assert sol.x == pytest.approx([1.0, -1.0, 1.0], abs=1e-8)


# --------------------------------------------------------------------------
# Multipliers and active sets

def test_active_inequality_multiplier_value():
    # maximize -(x-2)^2 s.t. 1 - x >= 0: optimum x=1 with multiplier 2
    cap = ConstraintBlock(
        name="cap", kind="ineq", dim=1,
        value=lambda z: np.array([1.0 - z[0]]),
        vjp=lambda z, w: np.array([-w[0]]))
    spec = SubproblemSpec(n_vars=1, objective=quadratic_bowl([2.0]),
                          constraints=[cap])
    sol = solve_convex_subproblem(spec, np.array([0.0]))
    assert sol.status == "optimal"
    assert sol.x == pytest.approx([1.0], abs=1e-6)
    assert sol.multipliers["cap"] == pytest.approx([2.0], abs=1e-4)


def test_inactive_inequality_multiplier_vanishes():
    cap = ConstraintBlock(
        name="cap", kind="ineq", dim=1,
        value=lambda z: np.array([1.0 - z[0]]),
        vjp=lambda z, w: np.array([-w[0]]))
    spec = SubproblemSpec(n_vars=1, objective=quadratic_bowl([0.0]),
                          constraints=[cap])
    sol = solve_convex_subproblem(spec, np.array([0.9]))
    assert sol.status == "optimal"
    assert sol.x == pytest.approx([0.0], abs=1e-6)
    assert sol.multipliers["cap"] == pytest.approx([0.0], abs=1e-6)


def test_equality_constraint_and_multiplier():
    # maximize -||x||^2 s.t. x1 + x2 = 1: optimum (1/2, 1/2), multiplier -1
    plane = ConstraintBlock(
        name="plane", kind="eq", dim=1,
        value=lambda z: np.array([z[0] + z[1] - 1.0]),
        vjp=lambda z, w: np.array([w[0], w[0]]))
    spec = SubproblemSpec(n_vars=2, objective=quadratic_bowl([0.0, 0.0]),
                          constraints=[plane])
    sol = solve_convex_subproblem(spec, np.array([1.0, 0.0]))
    assert sol.status == "optimal"
    assert sol.x == pytest.approx([0.5, 0.5], abs=1e-6)
    assert sol.objective == pytest.approx(-0.5, abs=1e-6)
    assert sol.multipliers["plane"] == pytest.approx([-1.0], abs=1e-4)


def test_epigraph_max_min():
    # maximize eta s.t. r_k >= eta for fixed rates (3, 5)
    rates = np.array([3.0, 5.0])

    def objective(z):
        return float(z[0]), np.array([1.0])

    users = ConstraintBlock(
        name="users", kind="ineq", dim=2,
        value=lambda z: rates - z[0],
        vjp=lambda z, w: np.array([-w.sum()]))
    spec = SubproblemSpec(n_vars=1, objective=objective, constraints=[users],
                          lower=np.array([0.0]), upper=np.array([10.0]))
    sol = solve_convex_subproblem(spec, np.array([0.0]))
    assert sol.status == "optimal"
    assert sol.x == pytest.approx([3.0], abs=1e-6)
    assert sol.multipliers["users"] == pytest.approx([1.0, 0.0], abs=1e-4)


def test_warm_multipliers_shorten_the_outer_loop():
    cap = ConstraintBlock(
        name="cap", kind="ineq", dim=1,
        value=lambda z: np.array([1.0 - z[0]]),
        vjp=lambda z, w: np.array([-w[0]]))
    spec = SubproblemSpec(n_vars=1, objective=quadratic_bowl([2.0]),
                          constraints=[cap])
    cold = solve_convex_subproblem(spec, np.array([0.0]))
    warm = solve_convex_subproblem(spec, cold.x,
                                   initial_multipliers=cold.multipliers)
    assert warm.status == "optimal"
    assert warm.x == pytest.approx(cold.x, abs=1e-6)
    assert warm.outer_iters <= cold.outer_iters
    assert warm.outer_iters <= 2


# --------------------------------------------------------------------------
# Failure modes and contracts

def test_contradictory_equalities_raise():
    a = ConstraintBlock(name="a", kind="eq", dim=1,
                        value=lambda z: np.array([z[0]]),
                        vjp=lambda z, w: np.array([w[0]]))
    b = ConstraintBlock(name="b", kind="eq", dim=1,
                        value=lambda z: np.array([z[0] - 1.0]),
                        vjp=lambda z, w: np.array([w[0]]))
    spec = SubproblemSpec(n_vars=1, objective=quadratic_bowl([0.0]),
                          constraints=[a, b])
    with pytest.raises(SubproblemInfeasibleError, match="violation"):
        solve_convex_subproblem(spec, np.array([0.7]),
                                tol=Tolerances(max_outer=8, max_inner=200))


def test_constraint_kind_validated():
    with pytest.raises(ValueError, match="'ineq' or 'eq'"):
        ConstraintBlock(name="x", kind="leq", dim=1,
                        value=lambda z: z, vjp=lambda z, w: w)


def test_warm_start_shape_checked():
    spec = SubproblemSpec(n_vars=2, objective=quadratic_bowl([0.0, 0.0]))
    with pytest.raises(ValueError, match="shape"):
        solve_convex_subproblem(spec, np.zeros(3))


def test_optimal_status_implies_kkt_fields():
    spec = SubproblemSpec(n_vars=2, objective=quadratic_bowl([0.3, -0.4]),
                          lower=-np.ones(2), upper=np.ones(2))
    sol = solve_convex_subproblem(spec, np.zeros(2))
    assert sol.status == "optimal"
    assert sol.stationarity <= Tolerances().tol_kkt
    assert sol.max_violation <= Tolerances().tol_feas
    assert isinstance(sol, SubproblemSolution)


def test_deterministic_repeat():
    ball = ConstraintBlock(
        name="ball", kind="ineq", dim=1,
        value=lambda z: np.array([1.0 - float(z @ z)]),
        vjp=lambda z, w: -2.0 * w[0] * z)
    spec = SubproblemSpec(n_vars=2, objective=quadratic_bowl([2.0, 1.0]),
                          constraints=[ball])
    a = solve_convex_subproblem(spec, np.array([0.1, 0.1]))
    b = solve_convex_subproblem(spec, np.array([0.1, 0.1]))
    assert np.array_equal(a.x, b.x)
    assert a.objective == b.objective
    assert a.outer_iters == b.outer_iters


def test_tolerances_as_dict():
    d = Tolerances().as_dict()
    assert d == {"tol_kkt": 1e-6, "tol_feas": 1e-8, "tol_monotone": 1e-6}


# --------------------------------------------------------------------------
# One-slot trajectory step cross-checked against a dense grid

def test_single_slot_step_moves_toward_user_until_ball_binds():
    user = np.array([300.0, 0.0])
    q0 = np.array([0.0, 0.0])
    radius = 50.0
    sur = rate_surrogate(1e8, 1e4, float((q0 - user) @ (q0 - user)))

    def objective(z):
        diff = z - user
        return (sur.constant + sur.slope * float(diff @ diff),
                2.0 * sur.slope * diff)

    ball = ConstraintBlock(
        name="ball", kind="ineq", dim=1,
        value=lambda z: np.array([1.0 - float((z - q0) @ (z - q0))
                                  / radius ** 2]),
        vjp=lambda z, w: -2.0 * w[0] * (z - q0) / radius ** 2)
    spec = SubproblemSpec(n_vars=2, objective=objective, constraints=[ball])
    sol = solve_convex_subproblem(spec, q0)

    expect = q0 + radius * (user - q0) / np.linalg.norm(user - q0)
    assert sol.status == "optimal"
    assert sol.x == pytest.approx(expect, abs=1e-3)

    # dense grid over the reachable disk must not beat the solver
    g = np.linspace(-radius, radius, 201)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1) + q0
    inside = ((pts - q0) ** 2).sum(axis=1) <= radius ** 2
    vals = sur.constant + sur.slope * ((pts[inside] - user) ** 2).sum(axis=1)
    assert vals.max() <= sol.objective + 1e-3
