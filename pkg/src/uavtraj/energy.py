"""Propulsion power models and trajectory energy accounting.

Fixed-wing power (level flight, zero acceleration envelope):

    P(v) = c1 * v^3 + c2 / v

Rotary-wing power:

    P(v) = P0 * (1 + 3 v^2 / U_tip^2)
         + P_i * sqrt(sqrt(1 + v^4 / (4 v0^4)) - v^2 / (2 v0^2))
         + parasite_coeff * v^3

Both diverge or lose meaning at v = 0 only for the fixed-wing model
(the c2/v induced-power term), so that model requires v > 0 everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .kinematics import FULL_KINEMATIC, Trajectory
from .scenario import (EnergyModelParams, FIXED_WING, NO_ENERGY_MODEL,
                       ROTARY_WING, TimeGrid)


class EnergyDomainError(ValueError):
    """Speed outside the domain of the requested power model."""


def fixed_wing_power(speed, c1: float, c2: float):
    """Fixed-wing propulsion power c1*v^3 + c2/v.  Scalar or ndarray."""
    v = np.asarray(speed, dtype=float)
    if np.any(v <= 0.0):
        raise EnergyDomainError(
            f"fixed-wing power undefined for speed <= 0 (got min {v.min()})")
    out = c1 * v ** 3 + c2 / v
    return float(out) if np.isscalar(speed) or out.ndim == 0 else out


def rotary_wing_power(speed, params: EnergyModelParams):
    """Rotary-wing propulsion power; valid for speed >= 0."""
    if params.kind != ROTARY_WING:
        raise ValueError(f"expected a rotary-wing model, got {params.kind!r}")
    v = np.asarray(speed, dtype=float)
    if np.any(v < 0.0):
        raise EnergyDomainError(
            f"rotary-wing power undefined for speed < 0 (got min {v.min()})")
    blade = params.blade_profile_power * (1.0 + 3.0 * v ** 2 / params.tip_speed ** 2)
    # sqrt(1+x^2) - x written as 1/(sqrt(1+x^2)+x) to avoid cancellation
    # at high speed, with x = v^2 / (2 v0^2)
    x = v ** 2 / (2.0 * params.rotor_induced_velocity ** 2)
    induced = params.induced_power * np.sqrt(1.0 / (np.sqrt(1.0 + x ** 2) + x))
    parasite = params.parasite_coeff * v ** 3
    out = blade + induced + parasite
    return float(out) if np.isscalar(speed) or out.ndim == 0 else out


def propulsion_power(speed, params: EnergyModelParams):
    if params.kind == FIXED_WING:
        return fixed_wing_power(speed, params.c1, params.c2)
    if params.kind == ROTARY_WING:
        return rotary_wing_power(speed, params)
    raise ValueError(f"no propulsion model of kind {params.kind!r}")


def trajectory_energy(traj: Trajectory, grid: TimeGrid,
                      params: EnergyModelParams) -> float:
    """Total propulsion energy sum_n P(||v[n]||) * slot_len in joules."""
    if params.kind == NO_ENERGY_MODEL:
        raise ValueError("scenario has no energy model")
    if traj.fidelity != FULL_KINEMATIC or traj.velocities is None:
        raise ValueError("energy accounting needs a full-kinematic trajectory "
                         "with per-slot velocities")
    if traj.n_slots != grid.slot_count:
        raise ValueError(f"trajectory has {traj.n_slots} slots, "
                         f"grid has {grid.slot_count}")
    speeds = np.linalg.norm(traj.velocities, axis=1)
    return float(np.sum(propulsion_power(speeds, params)) * grid.slot_len)


@dataclass(frozen=True)
class CharacteristicSpeeds:
    """Distinguished operating points of a propulsion model."""

    min_power_speed: float          # argmin_v P(v), loiter endurance
    min_energy_per_meter_speed: float  # argmin_v P(v)/v, max range


def characteristic_speeds(params: EnergyModelParams) -> CharacteristicSpeeds:
    if params.kind == FIXED_WING:
        # P'(v) = 3 c1 v^2 - c2 / v^2 = 0  and  (P/v)'(v) = 0 in closed form
        v_mp = (params.c2 / (3.0 * params.c1)) ** 0.25
        v_mr = (params.c2 / params.c1) ** 0.25
        return CharacteristicSpeeds(min_power_speed=float(v_mp),
                                    min_energy_per_meter_speed=float(v_mr))
    if params.kind == ROTARY_WING:
        # no closed form; both objectives are unimodal over practical speeds
        res_mp = minimize_scalar(lambda v: rotary_wing_power(v, params),
                                 bounds=(0.0, 120.0), method="bounded",
                                 options={"xatol": 1e-10})
        res_mr = minimize_scalar(lambda v: rotary_wing_power(v, params) / v,
                                 bounds=(1e-3, 120.0), method="bounded",
                                 options={"xatol": 1e-10})
        return CharacteristicSpeeds(min_power_speed=float(res_mp.x),
                                    min_energy_per_meter_speed=float(res_mr.x))
    raise ValueError(f"no propulsion model of kind {params.kind!r}")
