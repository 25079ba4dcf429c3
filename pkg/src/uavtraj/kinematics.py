"""Discretized periodic UAV trajectories and kinematic feasibility checks.

Two fidelity levels are used by the planners:

* waypoint-only: positions q[0..N] with a per-slot speed cap
  ||q[n+1]-q[n]|| <= v_max*delta; no velocity/acceleration arrays.
* full-kinematic: per-slot velocities and accelerations with exact
  second-order integration  q[n+1] = q[n] + v[n]*d + a[n]*d^2/2  and
  v[n+1] = v[n] + a[n]*d  (velocity wraps from slot N-1 back to slot 0).

With piecewise-constant acceleration the position update is equivalent to
the trapezoid rule q[n+1] = q[n] + (v[n]+v[n+1])*d/2, which is how
full-kinematic trajectories are reconstructed from velocity knots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import Scenario, TimeGrid, UavSpec

WAYPOINT_ONLY = "waypoint-only"
FULL_KINEMATIC = "full-kinematic"

POSITION_RESIDUAL_TOL = 1e-6   # m
SPEED_VIOLATION_TOL = 1e-9     # m/s
ACCEL_VIOLATION_TOL = 1e-9     # m/s^2
PERIODICITY_TOL = 1e-6         # m


class InfeasibleSpeedError(ValueError):
    """Requested circle speed violates the UAV's speed or acceleration limits."""


class LengthMismatchError(ValueError):
    """Trajectory array lengths inconsistent with the time grid."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Periodic trajectory sampled on the slot grid.

    positions has shape (N+1, 2) with positions[N] == positions[0];
    velocities/accelerations have shape (N, 2) and are None for
    waypoint-only fidelity.
    """

    positions: np.ndarray
    velocities: np.ndarray | None = None
    accelerations: np.ndarray | None = None
    fidelity: str = WAYPOINT_ONLY

    def __post_init__(self):
        object.__setattr__(self, "positions", _readonly(self.positions))
        if self.velocities is not None:
            object.__setattr__(self, "velocities", _readonly(self.velocities))
        if self.accelerations is not None:
            object.__setattr__(self, "accelerations", _readonly(self.accelerations))

    @property
    def n_slots(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def slot_positions(self) -> np.ndarray:
        """Per-slot nominal positions q[0..N-1] (the wrap point dropped)."""
        return self.positions[:-1]


def positions_from_velocities(q0: np.ndarray, v: np.ndarray, dt: float) -> np.ndarray:
    """Integrate cyclic velocity knots to positions via the trapezoid rule.

    Returns (N+1, 2); the final point equals q0 + dt*sum(v), so the
    trajectory is periodic exactly when the velocity knots sum to zero.
    """
    v = np.asarray(v, dtype=float)
    n = v.shape[0]
    out = np.empty((n + 1, 2))
    out[0] = q0
    mids = 0.5 * dt * (v + np.roll(v, -1, axis=0))
    out[1:] = q0 + np.cumsum(mids, axis=0)
    return out


def accelerations_from_velocities(v: np.ndarray, dt: float) -> np.ndarray:
    """Cyclic finite-difference accelerations a[n] = (v[n+1]-v[n])/dt."""
    v = np.asarray(v, dtype=float)
    return (np.roll(v, -1, axis=0) - v) / dt


def full_trajectory_from_velocities(q0, v, grid: TimeGrid,
                                    close_loop: bool = True) -> Trajectory:
    """Build a full-kinematic Trajectory from cyclic velocity knots.

    With close_loop the final position is snapped to q0 (callers are
    expected to have driven sum(v) to ~0 already; the snap keeps the
    periodicity gap identically zero and shows up as a kinematic residual
    of dt*||sum(v)|| instead).
    """
    dt = grid.slot_len
    pos = positions_from_velocities(np.asarray(q0, dtype=float), v, dt)
    if close_loop:
        pos[-1] = pos[0]
    acc = accelerations_from_velocities(v, dt)
    return Trajectory(positions=pos, velocities=np.asarray(v, dtype=float),
                      accelerations=acc, fidelity=FULL_KINEMATIC)


@dataclass(frozen=True)
class ResidualReport:
    """Feasibility residuals of a trajectory against a UAV's limits."""

    max_kinematic_residual: float  # m
    max_speed_violation: float     # m/s
    max_accel_violation: float     # m/s^2
    periodicity_gap: float         # m
    feasible: bool


def kinematic_residuals(t: Trajectory, u: UavSpec, g: TimeGrid) -> ResidualReport:
    """Compute exact constraint residuals and the feasibility verdict.

    Feasible means: kinematic residual <= 1e-6 m, speed/acceleration
    violations <= 1e-9, periodicity gap <= 1e-6 m.
    """
    n = g.slot_count
    dt = g.slot_len
    if t.positions.shape != (n + 1, 2):
        raise LengthMismatchError(
            f"positions shape {t.positions.shape} does not match slot_count {n}")
    per_gap = float(np.linalg.norm(t.positions[-1] - t.positions[0]))

    if t.fidelity == WAYPOINT_ONLY:
        chords = np.linalg.norm(np.diff(t.positions, axis=0), axis=1)
        speed_viol = max(0.0, float(chords.max()) / dt - u.v_max)
        kin_res = 0.0
        acc_viol = 0.0
    else:
        if t.velocities is None or t.accelerations is None:
            raise LengthMismatchError("full-kinematic trajectory lacks v or a arrays")
        if t.velocities.shape != (n, 2) or t.accelerations.shape != (n, 2):
            raise LengthMismatchError(
                f"velocity/acceleration shapes {t.velocities.shape}, "
                f"{t.accelerations.shape} do not match slot_count {n}")
        v, a = t.velocities, t.accelerations
        pos_res = t.positions[1:] - t.positions[:-1] - v * dt - 0.5 * a * dt ** 2
        v_next = np.roll(v, -1, axis=0)
        vel_res = (v_next - v - a * dt) * dt  # expressed in meters
        kin_res = float(max(np.linalg.norm(pos_res, axis=1).max(),
                            np.linalg.norm(vel_res, axis=1).max()))
        speeds = np.linalg.norm(v, axis=1)
        speed_viol = max(0.0, float(speeds.max()) - u.v_max,
                         u.v_min - float(speeds.min()))
        acc_viol = max(0.0, float(np.linalg.norm(a, axis=1).max()) - u.a_max)

    feasible = (kin_res <= POSITION_RESIDUAL_TOL
                and speed_viol <= SPEED_VIOLATION_TOL
                and acc_viol <= ACCEL_VIOLATION_TOL
                and per_gap <= PERIODICITY_TOL)
    return ResidualReport(max_kinematic_residual=kin_res,
                          max_speed_violation=speed_viol,
                          max_accel_violation=acc_viol,
                          periodicity_gap=per_gap,
                          feasible=feasible)


def speed_profile(t: Trajectory, g: TimeGrid) -> np.ndarray:
    """Per-slot speeds: ||v[n]|| (full-kinematic) or chord/delta (waypoint)."""
    if t.fidelity == FULL_KINEMATIC and t.velocities is not None:
        return np.linalg.norm(t.velocities, axis=1)
    return np.linalg.norm(np.diff(t.positions, axis=0), axis=1) / g.slot_len


# --------------------------------------------------------------------------
# Circular initialization

def cluster_users(s: Scenario) -> list[list[int]]:
    """Partition users among UAVs by nearest-center clustering.

    Deterministic: farthest-point seeding (lowest index wins ties) followed
    by Lloyd iterations with lowest-index tie-breaks.  With one UAV all
    users are assigned to it.
    """
    pos = np.array([u.position for u in s.users], dtype=float)
    k_users, m = pos.shape[0], s.n_uavs
    if m == 1:
        return [list(range(k_users))]
    centers = [int(np.argmax(np.linalg.norm(pos - pos.mean(axis=0), axis=1)))]
    while len(centers) < min(m, k_users):
        d = np.min(np.linalg.norm(pos[:, None, :] - pos[centers][None, :, :],
                                  axis=2), axis=1)
        centers.append(int(np.argmax(d)))
    cpos = pos[centers].copy()
    if m > k_users:
        cpos = np.vstack([cpos, np.tile(pos.mean(axis=0), (m - k_users, 1))])
    assign = np.zeros(k_users, dtype=int)
    for _ in range(100):
        d = np.linalg.norm(pos[:, None, :] - cpos[None, :, :], axis=2)
        new_assign = np.argmin(d, axis=1)
        for j in range(m):
            members = np.nonzero(new_assign == j)[0]
            if members.size == 0:
                # hand the emptied cluster the user farthest from its center
                far = int(np.argmax(np.min(d, axis=1)))
                new_assign[far] = j
                members = np.array([far])
            cpos[j] = pos[members].mean(axis=0)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return [sorted(np.nonzero(assign == j)[0].tolist()) for j in range(m)]


def max_feasible_circle_speed(s: Scenario, uav_index: int,
                              fidelity: str = WAYPOINT_ONLY) -> float:
    """Largest constant speed allowed for a one-loop-per-period circle."""
    u = s.uavs[uav_index]
    dt = s.grid.slot_len
    half = math.pi / s.grid.slot_count
    cap = u.v_max
    if fidelity == FULL_KINEMATIC and math.isfinite(u.a_max):
        cap = min(cap, u.a_max * dt / (2.0 * math.sin(half)))
    return cap


def circular_initial_trajectory(s: Scenario, uav_index: int, speed: float,
                                fidelity: str = WAYPOINT_ONLY) -> Trajectory:
    """Constant-speed circle over the UAV's assigned users, one loop per period.

    The radius follows from the single-loop constraint (continuous limit
    r = speed*T/(2*pi)); the discrete radius is chosen so the per-slot
    speed equals `speed` exactly at the requested fidelity.
    """
    u = s.uavs[uav_index]
    grid = s.grid
    n, dt = grid.slot_count, grid.slot_len
    if not (u.v_min <= speed <= u.v_max):
        raise InfeasibleSpeedError(
            f"circle speed {speed} outside [{u.v_min}, {u.v_max}] for uav {u.id!r}")
    members = cluster_users(s)[uav_index]
    center = np.array([s.users[i].position for i in members], dtype=float).mean(axis=0)
    half = math.pi / n  # half the per-slot turn angle
    angles = 2.0 * math.pi * (np.arange(n + 1) % n) / n

    if fidelity == WAYPOINT_ONLY:
        radius = speed * dt / (2.0 * math.sin(half))
        pos = center + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        return Trajectory(positions=pos, fidelity=WAYPOINT_ONLY)

    if fidelity != FULL_KINEMATIC:
        raise ValueError(f"unknown fidelity {fidelity!r}")
    accel = 2.0 * speed * math.sin(half) / dt
    if accel > u.a_max:
        raise InfeasibleSpeedError(
            f"circle at speed {speed} needs {accel:.6g} m/s^2 > a_max {u.a_max} "
            f"for uav {u.id!r}")
    radius = speed * dt / (2.0 * math.tan(half))
    pos = center + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    tangents = np.stack([-np.sin(angles[:-1]), np.cos(angles[:-1])], axis=1)
    v = speed * tangents
    a = accelerations_from_velocities(v, dt)
    return Trajectory(positions=pos, velocities=v, accelerations=a,
                      fidelity=FULL_KINEMATIC)


# --------------------------------------------------------------------------
# Export

def export_trajectory_csv(t: Trajectory, g: TimeGrid, fh) -> None:
    """Write slot,t_s,x_m,y_m,vx_mps,vy_mps,ax_mps2,ay_mps2,speed_mps rows.

    Velocity/acceleration columns are empty for waypoint-only fidelity and
    on the final wrap row.
    """
    from .artifacts import fmt

    dt = g.slot_len
    speeds = speed_profile(t, g)
    fh.write("slot,t_s,x_m,y_m,vx_mps,vy_mps,ax_mps2,ay_mps2,speed_mps\n")
    n = t.n_slots
    for i in range(n + 1):
        x, y = t.positions[i]
        row = [str(i), fmt(i * dt), fmt(x), fmt(y)]
        if i < n and t.fidelity == FULL_KINEMATIC:
            row += [fmt(t.velocities[i, 0]), fmt(t.velocities[i, 1]),
                    fmt(t.accelerations[i, 0]), fmt(t.accelerations[i, 1])]
        else:
            row += ["", "", "", ""]
        row.append(fmt(speeds[i]) if i < n else "")
        fh.write(",".join(row) + "\n")
