"""The three joint designs: P1 delay tradeoff, P2 multi-UAV IUIC, P3
energy-constrained, assembled from the scheduling LP and SCA trajectory /
power blocks, plus closed-form baselines and plan export.

Conventions shared by the SCA blocks:

* Every cap handed to a subproblem is tightened by a small relative margin
  so that solver tolerance dust never turns into a true constraint
  violation; restored plans always satisfy the original limits.
* Decision variables are rescaled to O(1) (positions by v_max*delta,
  velocities by v_max, slack squared distances by H^2) before entering the
  solver; constraint residuals are likewise normalized.
* Each block update returns a full candidate plan whose throughput is
  recomputed exactly; the BCD driver accepts it only if the true objective
  does not decrease.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .auglag import ConstraintBlock, SubproblemSpec, Tolerances, \
    solve_convex_subproblem
from .bcd import BcdConfig, SolveReport, bcd_solve
from .channel import (PowerProfile, Schedule, common_throughput,
                      export_powers_csv, export_rates_csv,
                      export_schedule_csv, full_power_profile, gain_tensor,
                      link_rate, los_gain, per_slot_rates)
from .energy import characteristic_speeds, trajectory_energy
from .kinematics import (FULL_KINEMATIC, WAYPOINT_ONLY, Trajectory,
                         circular_initial_trajectory, cluster_users,
                         export_trajectory_csv, full_trajectory_from_velocities,
                         kinematic_residuals, max_feasible_circle_speed)
from .scenario import FIXED_WING, NO_ENERGY_MODEL, Scenario
from .surrogates import rate_surrogate_arrays

LN2 = math.log(2.0)

# relative margins between the solver's caps and the true limits; chosen so
# that feasibility-tolerance dust plus restoration arithmetic stays strictly
# inside the true constraint
SPEED_MARGIN = 1e-7
ACCEL_MARGIN = 1e-6
ENERGY_MARGIN = 1e-7
VMIN_MARGIN = 1e-7
INIT_MARGIN = 1e-6  # extra headroom for initial trajectories

SERVICE_THRESHOLD = 1e-6  # alpha above this counts as serving the user


class InfeasibleBudgetError(ValueError):
    """E_max is below the energy of the least-energy circular initializer."""


@dataclass(frozen=True, eq=False)
class Plan:
    """A complete candidate solution; throughputs always recomputed from
    the raw components at construction."""

    trajectories: tuple[Trajectory, ...]
    schedule: Schedule
    powers: PowerProfile
    per_user_throughput: np.ndarray
    common_throughput: float


def make_plan(s: Scenario, trajectories, schedule: Schedule,
              powers: PowerProfile) -> Plan:
    per_user, r_com = common_throughput(s, trajectories, schedule, powers)
    per_user.setflags(write=False)
    return Plan(trajectories=tuple(trajectories), schedule=schedule,
                powers=powers, per_user_throughput=per_user,
                common_throughput=r_com)


# --------------------------------------------------------------------------
# Scheduling LP

def max_min_schedule_from_rates(rates: np.ndarray) -> np.ndarray:
    """Exact max-min time-sharing LP on a fixed rate tensor (M, K, N).

    Epigraph form: maximize eta subject to per-user throughput >= eta,
    per-UAV and per-user slot shares <= 1, alpha in [0, 1].  The returned
    alpha is clipped/rescaled against LP tolerance dust and symmetrized
    across users with byte-identical rate matrices so that symmetric
    scenarios produce the symmetric optimum.
    """
    rates = np.asarray(rates, dtype=float)
    m_cnt, k_cnt, n_cnt = rates.shape
    n_alpha = m_cnt * k_cnt * n_cnt
    c = np.zeros(n_alpha + 1)
    c[-1] = -1.0

    rows, cols, vals = [], [], []
    b = []

    def var(m, k, n):
        return (m * k_cnt + k) * n_cnt + n

    row = 0
    for k in range(k_cnt):  # eta - (1/N) sum alpha*r <= 0
        for m in range(m_cnt):
            for n in range(n_cnt):
                rows.append(row)
                cols.append(var(m, k, n))
                vals.append(-rates[m, k, n] / n_cnt)
        rows.append(row)
        cols.append(n_alpha)
        vals.append(1.0)
        b.append(0.0)
        row += 1
    for m in range(m_cnt):  # sum_k alpha[m,:,n] <= 1
        for n in range(n_cnt):
            for k in range(k_cnt):
                rows.append(row)
                cols.append(var(m, k, n))
                vals.append(1.0)
            b.append(1.0)
            row += 1
    if m_cnt > 1:  # sum_m alpha[:,k,n] <= 1
        for k in range(k_cnt):
            for n in range(n_cnt):
                for m in range(m_cnt):
                    rows.append(row)
                    cols.append(var(m, k, n))
                    vals.append(1.0)
                b.append(1.0)
                row += 1

    a_ub = coo_matrix((vals, (rows, cols)), shape=(row, n_alpha + 1)).tocsc()
    bounds = [(0.0, 1.0)] * n_alpha + [(None, None)]
    res = linprog(c, A_ub=a_ub, b_ub=np.array(b), bounds=bounds,
                  method="highs")
    if not res.success:
        raise RuntimeError(f"scheduling LP failed: {res.message}")
    alpha = np.clip(res.x[:n_alpha].reshape(m_cnt, k_cnt, n_cnt), 0.0, 1.0)

    for _ in range(2):  # scale away any dust above the share caps
        uav_sums = alpha.sum(axis=1, keepdims=True)
        alpha *= np.minimum(1.0, 1.0 / np.maximum(uav_sums, 1e-300))
        if m_cnt > 1:
            user_sums = alpha.sum(axis=0, keepdims=True)
            alpha *= np.minimum(1.0, 1.0 / np.maximum(user_sums, 1e-300))

    # users with identical rate matrices are interchangeable; average their
    # shares so the symmetric instance returns the symmetric optimum
    groups: dict[bytes, list[int]] = {}
    for k in range(k_cnt):
        groups.setdefault(rates[:, k, :].tobytes(), []).append(k)
    for members in groups.values():
        if len(members) > 1:
            alpha[:, members, :] = alpha[:, members, :].mean(
                axis=1, keepdims=True)
    return alpha


def schedule_lp(s: Scenario, trajectories,
                powers: PowerProfile) -> tuple[Schedule, np.ndarray, float]:
    """Optimal fractional schedule for fixed trajectories and powers.

    Returns (schedule, per-user throughputs, R_com), the throughputs
    recomputed from the post-processed alpha.
    """
    rates = per_slot_rates(s, gain_tensor(s, trajectories), powers)
    alpha = max_min_schedule_from_rates(rates)
    per_user = (alpha * rates).sum(axis=(0, 2)) / s.grid.slot_count
    return Schedule(alpha=alpha), per_user, float(per_user.min())


# --------------------------------------------------------------------------
# Closed-form baselines

def _zenith_rates(s: Scenario, uav_index: int = 0) -> np.ndarray:
    u = s.uavs[uav_index]
    gain = s.channel.beta0 / u.altitude ** 2
    r = link_rate(gain, u.tx_power, s.channel.noise_power)
    return np.full(s.n_users, r)


def static_baseline(s: Scenario) -> float:
    """R_com of a UAV parked at the user centroid with the optimal
    fractional TDMA split (equal-throughput water level)."""
    if s.n_uavs != 1:
        raise ValueError("static_baseline is defined for single-UAV scenarios")
    u = s.uavs[0]
    centroid = np.array([usr.position for usr in s.users]).mean(axis=0)
    inv_sum = 0.0
    for usr in s.users:
        g = los_gain(centroid, u.altitude, usr.position, s.channel.beta0)
        inv_sum += 1.0 / link_rate(g, u.tx_power, s.channel.noise_power)
    return 1.0 / inv_sum


def travel_free_upper_bound(s: Scenario) -> float:
    """Upper bound on any P1 plan: every user served at its zenith rate,
    time shares summing to one; harmonic form (= rate/K for homogeneous
    users)."""
    if s.n_uavs != 1:
        raise ValueError("travel_free_upper_bound is defined for single-UAV "
                         "scenarios")
    rates = _zenith_rates(s)
    return float(1.0 / np.sum(1.0 / rates))


# --------------------------------------------------------------------------
# Shared SCA helpers

def _chords(q: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.roll(q, -1, axis=0) - q, axis=1)


def _shrink_waypoint_step(q_ref: np.ndarray, q_new: np.ndarray,
                          chord_cap: float) -> np.ndarray:
    """Pull an SCA step back toward its expansion point until every cyclic
    chord fits under the cap.  Chord lengths are convex along the segment,
    so bisection against a feasible q_ref is safe."""
    if _chords(q_new).max() <= chord_cap * (1.0 + 1e-8):
        return q_new
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _chords(q_ref + mid * (q_new - q_ref)).max() <= chord_cap:
            lo = mid
        else:
            hi = mid
    return q_ref + lo * (q_new - q_ref)


def _waypoint_trajectory(q: np.ndarray) -> Trajectory:
    return Trajectory(positions=np.vstack([q, q[:1]]), fidelity=WAYPOINT_ONLY)


def _speed_block(n_offset: int, n_slots: int, n_vars: int, cap_chord: float,
                 full_chord: float, scale: float, name: str = "speed"):
    """Cyclic chord-length constraints on scaled positions z[q] = q/scale.

    g_n = (cap^2 - ||q[n+1]-q[n]||^2) / full_chord^2 with q = scale*z.
    """
    cap2 = cap_chord ** 2
    s0 = full_chord ** 2
    sc2 = scale ** 2

    def value(z):
        q = z[n_offset:n_offset + 2 * n_slots].reshape(n_slots, 2)
        d = np.roll(q, -1, axis=0) - q
        return (cap2 / sc2 - (d * d).sum(axis=1)) * (sc2 / s0)

    def vjp(z, w):
        q = z[n_offset:n_offset + 2 * n_slots].reshape(n_slots, 2)
        d = np.roll(q, -1, axis=0) - q
        gd = (2.0 * sc2 / s0) * w[:, None] * d
        out = np.zeros(n_vars)
        out[n_offset:n_offset + 2 * n_slots] = (gd - np.roll(gd, 1, axis=0)).ravel()
        return out

    return ConstraintBlock(name, "ineq", n_slots, value, vjp)


# --------------------------------------------------------------------------
# P1: single-UAV delay tradeoff

class _DelayProblem:
    """BCD blocks for the single-UAV max-min problem (waypoint fidelity)."""

    blocks = ("schedule", "trajectory")

    def __init__(self, s: Scenario, tol: Tolerances):
        self.s = s
        self.tol = tol
        u = s.uavs[0]
        self.w = np.array([usr.position for usr in s.users], dtype=float)
        self.gamma0 = u.tx_power * s.channel.beta0 / s.channel.noise_power
        self.h2 = u.altitude ** 2
        self.n = s.grid.slot_count
        dt = s.grid.slot_len
        self.full_chord = u.v_max * dt
        self.cap_chord = self.full_chord * (1.0 - SPEED_MARGIN)
        self.q_scale = max(self.full_chord, 1.0)
        self._mults: dict | None = None  # recycled across SCA steps

    def objective(self, plan: Plan) -> float:
        return plan.common_throughput

    def update(self, name: str, plan: Plan) -> Plan:
        if name == "schedule":
            sched, _, _ = schedule_lp(self.s, plan.trajectories, plan.powers)
            return make_plan(self.s, plan.trajectories, sched, plan.powers)
        if name == "trajectory":
            return self._trajectory_step(plan)
        raise ValueError(f"unknown block {name!r}")

    def _trajectory_step(self, plan: Plan) -> Plan:
        n, k_cnt = self.n, self.s.n_users
        sc = self.q_scale
        q_r = plan.trajectories[0].slot_positions.copy()
        alpha = plan.schedule.alpha[0]
        x_r = ((q_r[None, :, :] - self.w[:, None, :]) ** 2).sum(axis=2)
        const, slope = rate_surrogate_arrays(self.gamma0, self.h2, x_r)
        nv = 2 * n + 1
        w_users = self.w

        def obj(z):
            g = np.zeros(nv)
            g[-1] = 1.0
            return float(z[-1]), g

        def thr_value(z):
            q = sc * z[:2 * n].reshape(n, 2)
            d2 = ((q[None, :, :] - w_users[:, None, :]) ** 2).sum(axis=2)
            thr = (alpha * (const + slope * d2)).sum(axis=1) / n
            return thr - z[-1]

        def thr_vjp(z, wv):
            q = sc * z[:2 * n].reshape(n, 2)
            diff = q[None, :, :] - w_users[:, None, :]
            gq = np.einsum("k,kn,kn,knd->nd", wv, alpha, slope, diff)
            out = np.zeros(nv)
            out[:2 * n] = gq.ravel() * (2.0 * sc / n)
            out[-1] = -wv.sum()
            return out

        eta0 = float(((alpha * (const + slope * x_r)).sum(axis=1) / n).min())
        z0 = np.concatenate([q_r.ravel() / sc, [eta0]])
        spec = SubproblemSpec(
            n_vars=nv, objective=obj,
            constraints=[
                ConstraintBlock("throughput", "ineq", k_cnt, thr_value, thr_vjp),
                _speed_block(0, n, nv, self.cap_chord, self.full_chord, sc),
            ])
        sol = solve_convex_subproblem(spec, z0, self.tol,
                                      initial_multipliers=self._mults)
        self._mults = sol.multipliers
        q_new = sc * sol.x[:2 * n].reshape(n, 2)
        q_new = _shrink_waypoint_step(q_r, q_new, self.cap_chord)
        return make_plan(self.s, (_waypoint_trajectory(q_new),),
                         plan.schedule, plan.powers)


def _initial_circle_speeds(s: Scenario, uav_index: int, members,
                           fidelity: str) -> list[float]:
    u = s.uavs[uav_index]
    centroid = np.array([s.users[i].position for i in members]).mean(axis=0)
    spread = max((np.linalg.norm(np.array(s.users[i].position) - centroid)
                  for i in members), default=0.0)
    hi = min(u.v_max, max_feasible_circle_speed(s, uav_index, fidelity))
    hi *= 1.0 - INIT_MARGIN
    lo = u.v_min * (1.0 + INIT_MARGIN) if u.v_min > 0 else 0.0
    desired = 2.0 * math.pi * spread / s.grid.period
    cands = [min(max(desired, lo), hi), min(max(0.5 * desired, lo), hi), hi]
    out = []
    for v in cands:
        if lo <= v <= hi and v not in out:
            out.append(v)
    return out


def _best_single_uav_init(s: Scenario) -> Plan:
    """Score a handful of circular initializers (plus parking at the
    centroid) by the scheduling LP and keep the best."""
    powers = full_power_profile(s)
    members = list(range(s.n_users))
    candidates: list[Trajectory] = []
    for v in _initial_circle_speeds(s, 0, members, WAYPOINT_ONLY):
        candidates.append(circular_initial_trajectory(s, 0, v, WAYPOINT_ONLY))
    centroid = np.array([u.position for u in s.users]).mean(axis=0)
    static = np.tile(centroid, (s.grid.slot_count + 1, 1))
    candidates.append(Trajectory(positions=static, fidelity=WAYPOINT_ONLY))
    best = None
    for traj in candidates:
        sched, _, r_com = schedule_lp(s, (traj,), powers)
        if best is None or r_com > best[0]:
            best = (r_com, traj, sched)
    return make_plan(s, (best[1],), best[2], powers)


def plan_single_uav_delay(s: Scenario, config: BcdConfig | None = None,
                          initial: Plan | None = None) -> SolveReport:
    """P1: joint trajectory and scheduling design for one UAV.

    `initial` warm-starts BCD from an existing plan (sweeps); it must
    already be feasible for this scenario."""
    if s.n_uavs != 1:
        raise ValueError("plan_single_uav_delay requires exactly one UAV")
    config = config or BcdConfig()
    warm = initial is not None
    if not warm:
        initial = _best_single_uav_init(s)
    problem = _DelayProblem(s, config.subproblem_tol)
    report = bcd_solve(problem, initial, config)
    report.warm_started = warm
    return report


# --------------------------------------------------------------------------
# P2: multi-UAV IUIC

class _IuicProblem:
    """BCD blocks for the multi-UAV interference-coordination problem."""

    def __init__(self, s: Scenario, tol: Tolerances, power_control: bool):
        self.s = s
        self.tol = tol
        self.power_control = power_control
        self.blocks = (("schedule", "power", "trajectory") if power_control
                       else ("schedule", "trajectory"))
        self.w = np.array([usr.position for usr in s.users], dtype=float)
        self.h2 = np.array([u.altitude ** 2 for u in s.uavs])
        self.caps = np.array([u.tx_power for u in s.uavs])
        self.beta0 = s.channel.beta0
        self.noise = s.channel.noise_power
        self.n = s.grid.slot_count
        dt = s.grid.slot_len
        self.full_chord = np.array([u.v_max * dt for u in s.uavs])
        self.cap_chord = self.full_chord * (1.0 - SPEED_MARGIN)
        self.q_scale = max(float(self.full_chord.max()), 1.0)
        self._mults: dict[str, dict] = {}  # per block, recycled across steps

    def objective(self, plan: Plan) -> float:
        return plan.common_throughput

    def update(self, name: str, plan: Plan) -> Plan:
        if name == "schedule":
            sched, _, _ = schedule_lp(self.s, plan.trajectories, plan.powers)
            return make_plan(self.s, plan.trajectories, sched, plan.powers)
        if name == "power":
            return self._power_step(plan)
        if name == "trajectory":
            return self._trajectory_step(plan)
        raise ValueError(f"unknown block {name!r}")

    def _power_step(self, plan: Plan) -> Plan:
        m_cnt, k_cnt, n = self.s.n_uavs, self.s.n_users, self.n
        gains = gain_tensor(self.s, plan.trajectories)
        alpha = plan.schedule.alpha
        abar = alpha.sum(axis=0)
        p_r = plan.powers.p
        received_r = p_r[:, None, :] * gains
        i_ref = received_r.sum(axis=0)[None] - received_r  # (M,K,N)
        inv_ref = 1.0 / (LN2 * (self.noise + i_ref))
        b0 = np.log2(self.noise + i_ref)
        nv = m_cnt * n + 1
        noise = self.noise

        def obj(z):
            g = np.zeros(nv)
            g[-1] = 1.0
            return float(z[-1]), g

        def thr_value(z):
            p = z[:-1].reshape(m_cnt, n)
            rec = p[:, None, :] * gains
            tot = rec.sum(axis=0)
            interf = tot[None] - rec
            surrogate = np.log2(noise + tot)[None] - (
                b0 + inv_ref * (interf - i_ref))
            return (alpha * surrogate).sum(axis=(0, 2)) / n - z[-1]

        def thr_vjp(z, wv):
            p = z[:-1].reshape(m_cnt, n)
            rec = p[:, None, :] * gains
            tot = rec.sum(axis=0)
            t1 = abar / (LN2 * (noise + tot))             # (K,N)
            s_all = (alpha * inv_ref).sum(axis=0)          # (K,N)
            coef = gains * (t1[None] - (s_all[None] - alpha * inv_ref))
            out = np.zeros(nv)
            out[:-1] = (np.einsum("k,jkn->jn", wv, coef) / n).ravel()
            out[-1] = -wv.sum()
            return out

        thr_r = (alpha * per_slot_rates(self.s, gains, plan.powers)
                 ).sum(axis=(0, 2)) / n
        z0 = np.concatenate([p_r.ravel(), [float(thr_r.min())]])
        lower = np.zeros(nv)
        lower[-1] = -np.inf
        upper = np.concatenate([np.repeat(self.caps, n), [np.inf]])
        spec = SubproblemSpec(
            n_vars=nv, objective=obj,
            constraints=[ConstraintBlock("throughput", "ineq", k_cnt,
                                         thr_value, thr_vjp)],
            lower=lower, upper=upper)
        sol = solve_convex_subproblem(spec, z0, self.tol,
                                      initial_multipliers=self._mults.get("power"))
        self._mults["power"] = sol.multipliers
        p_new = np.clip(sol.x[:-1].reshape(m_cnt, n), 0.0,
                        self.caps[:, None])
        return make_plan(self.s, plan.trajectories, plan.schedule,
                         PowerProfile(p=p_new))

    def _trajectory_step(self, plan: Plan) -> Plan:
        m_cnt, k_cnt, n = self.s.n_uavs, self.s.n_users, self.n
        sc = self.q_scale
        noise = self.noise
        alpha = plan.schedule.alpha
        abar = alpha.sum(axis=0)
        p = plan.powers.p
        c_pow = p * self.beta0                       # (M,N)
        q_r = np.stack([t.slot_positions for t in plan.trajectories])  # (M,N,2)
        diff_r = q_r[:, None, :, :] - self.w[None, :, None, :]
        x_r = (diff_r ** 2).sum(axis=3)              # (M,K,N)
        h2 = self.h2[:, None, None]
        u_r = c_pow[:, None, :] / (h2 + x_r)
        inner_r = noise + u_r.sum(axis=0)            # (K,N)
        a_coef = -u_r / ((h2 + x_r) * LN2 * inner_r[None])
        a0 = np.log2(inner_r) - (a_coef * x_r).sum(axis=0)  # (K,N)

        qsize = 2 * m_cnt * n
        ssize = m_cnt * k_cnt * n
        nv = qsize + ssize + 1
        # Per-entry reference scaling: slack distances span several orders of
        # magnitude (near pairs vs far interference pairs), so a single scale
        # leaves the inner quasi-Newton solver badly conditioned.
        s_scale = h2 + x_r                           # (M,K,N)

        def split(z):
            q = sc * z[:qsize].reshape(m_cnt, n, 2)
            s_var = s_scale * z[qsize:qsize + ssize].reshape(m_cnt, k_cnt, n)
            return q, s_var

        def obj(z):
            g = np.zeros(nv)
            g[-1] = 1.0
            return float(z[-1]), g

        def thr_value(z):
            q, s_var = split(z)
            diff = q[:, None, :, :] - self.w[None, :, None, :]
            x = (diff ** 2).sum(axis=3)
            a_lin = a0 + (a_coef * x).sum(axis=0)    # (K,N)
            u_s = c_pow[:, None, :] / (h2 + s_var)
            i_m = u_s.sum(axis=0)[None] - u_s
            b_term = -np.log2(noise + i_m)
            thr = ((abar * a_lin).sum(axis=1)
                   + (alpha * b_term).sum(axis=(0, 2))) / n
            return thr - z[-1]

        def thr_vjp(z, wv):
            q, s_var = split(z)
            diff = q[:, None, :, :] - self.w[None, :, None, :]
            u_s = c_pow[:, None, :] / (h2 + s_var)
            i_m = u_s.sum(axis=0)[None] - u_s
            t_m = alpha / (LN2 * (noise + i_m))      # (M,K,N)
            t_sum = t_m.sum(axis=0)                  # (K,N)
            duds_mag = u_s / (h2 + s_var)            # = -d u/d S
            gs = (wv[None, :, None] * duds_mag * (t_sum[None] - t_m)) / n
            gq = np.einsum("k,kn,jkn,jknd->jnd", wv, abar, a_coef, diff)
            out = np.zeros(nv)
            out[:qsize] = gq.ravel() * (2.0 * sc / n)
            out[qsize:qsize + ssize] = (gs * s_scale).ravel()
            out[-1] = -wv.sum()
            return out

        def tangent_value(z):
            q, s_var = split(z)
            diff = q[:, None, :, :] - self.w[None, :, None, :]
            lin = 2.0 * (diff_r * diff).sum(axis=3) - x_r
            return ((lin - s_var) / s_scale).ravel()

        def tangent_vjp(z, wv):
            wv = wv.reshape(m_cnt, k_cnt, n) / s_scale
            gq = 2.0 * (wv[..., None] * diff_r).sum(axis=1)  # (M,N,2)
            out = np.zeros(nv)
            out[:qsize] = gq.ravel() * sc
            out[qsize:qsize + ssize] = (-wv * s_scale).ravel()
            return out

        constraints = [
            ConstraintBlock("throughput", "ineq", k_cnt, thr_value, thr_vjp),
            ConstraintBlock("s_tangent", "ineq", ssize, tangent_value,
                            tangent_vjp),
        ]
        for m in range(m_cnt):
            constraints.append(_speed_block(
                2 * m * n, n, nv, float(self.cap_chord[m]),
                float(self.full_chord[m]), sc, name=f"speed_{m}"))

        lower = np.full(nv, -np.inf)
        # keep h2 + S well positive
        lower[qsize:qsize + ssize] = (-0.9 * h2 / s_scale).ravel()
        thr_true = plan.per_user_throughput
        z0 = np.concatenate([q_r.ravel() / sc, (x_r / s_scale).ravel(),
                             [float(thr_true.min())]])
        spec = SubproblemSpec(n_vars=nv, objective=obj,
                              constraints=constraints, lower=lower)
        sol = solve_convex_subproblem(spec, z0, self.tol,
                                      initial_multipliers=self._mults.get("trajectory"))
        self._mults["trajectory"] = sol.multipliers
        q_new = sc * sol.x[:qsize].reshape(m_cnt, n, 2)
        trajs = []
        for m in range(m_cnt):
            q_m = _shrink_waypoint_step(q_r[m], q_new[m],
                                        float(self.cap_chord[m]))
            trajs.append(_waypoint_trajectory(q_m))
        return make_plan(self.s, trajs, plan.schedule, plan.powers)


def _multi_uav_init(s: Scenario) -> Plan:
    powers = full_power_profile(s)
    clusters = cluster_users(s)
    trajs = []
    for m in range(s.n_uavs):
        speeds = _initial_circle_speeds(s, m, clusters[m] or
                                        list(range(s.n_users)), WAYPOINT_ONLY)
        trajs.append(circular_initial_trajectory(s, m, speeds[0],
                                                 WAYPOINT_ONLY))
    sched, _, _ = schedule_lp(s, trajs, powers)
    return make_plan(s, trajs, sched, powers)


def plan_multi_uav_iuic(s: Scenario, power_control: bool = True,
                        config: BcdConfig | None = None,
                        initial: Plan | None = None) -> SolveReport:
    """P2: joint trajectory, association, and (optionally) power design
    for co-channel UAVs.  With power_control off, all UAVs stay pinned at
    their maximum transmit power."""
    if s.n_uavs < 2:
        raise ValueError("plan_multi_uav_iuic requires at least two UAVs")
    config = config or BcdConfig()
    warm = initial is not None
    if not warm:
        initial = _multi_uav_init(s)
    problem = _IuicProblem(s, config.subproblem_tol, power_control)
    report = bcd_solve(problem, initial, config)
    report.warm_started = warm
    return report


# --------------------------------------------------------------------------
# P3: energy-constrained design (fixed-wing, full kinematics)

class _EnergyProblem:
    """BCD blocks for the energy-constrained single-UAV problem."""

    blocks = ("schedule", "trajectory")

    def __init__(self, s: Scenario, tol: Tolerances):
        self.s = s
        self.tol = tol
        u = s.uavs[0]
        self.u = u
        self.w = np.array([usr.position for usr in s.users], dtype=float)
        self.gamma0 = u.tx_power * s.channel.beta0 / s.channel.noise_power
        self.h2 = u.altitude ** 2
        self.n = s.grid.slot_count
        self.dt = s.grid.slot_len
        self.v_hi = u.v_max * (1.0 - SPEED_MARGIN)
        self.v_lo = u.v_min * (1.0 + VMIN_MARGIN)
        self.a_hi = (u.a_max * (1.0 - ACCEL_MARGIN)
                     if math.isfinite(u.a_max) else math.inf)
        self.e_hi = u.energy_budget * (1.0 - ENERGY_MARGIN)
        self.q_scale = 1000.0
        self._mults: dict | None = None  # recycled across SCA steps

    def objective(self, plan: Plan) -> float:
        return plan.common_throughput

    def update(self, name: str, plan: Plan) -> Plan:
        if name == "schedule":
            sched, _, _ = schedule_lp(self.s, plan.trajectories, plan.powers)
            return make_plan(self.s, plan.trajectories, sched, plan.powers)
        if name == "trajectory":
            return self._trajectory_step(plan)
        raise ValueError(f"unknown block {name!r}")

    def _restore(self, q0: np.ndarray, v: np.ndarray) -> Trajectory:
        """Exact feasibility restoration: zero-mean velocities (periodicity)
        and hard speed clipping into the margined band."""
        v = v.copy()
        for _ in range(3):
            v -= v.mean(axis=0)
            speeds = np.linalg.norm(v, axis=1)
            scale = np.clip(speeds, self.v_lo, self.v_hi) / np.maximum(
                speeds, 1e-300)
            v *= scale[:, None]
        v -= v.mean(axis=0)
        return full_trajectory_from_velocities(q0, v, self.s.grid)

    def _trajectory_step(self, plan: Plan) -> Plan:
        n, k_cnt = self.n, self.s.n_users
        dt = self.dt
        u = self.u
        sc = self.q_scale
        vmax = u.v_max
        traj = plan.trajectories[0]
        q0_r = traj.positions[0].copy()
        v_r = traj.velocities.copy()
        alpha = plan.schedule.alpha[0]
        x_r = ((traj.slot_positions[None, :, :]
                - self.w[:, None, :]) ** 2).sum(axis=2)
        const, slope = rate_surrogate_arrays(self.gamma0, self.h2, x_r)
        c1, c2 = self.s.energy.c1, self.s.energy.c2
        e_max = u.energy_budget
        w_users = self.w
        zv_r = v_r / vmax

        # layout: zq0 (2) | zv (2N) | ztau (N) | eta
        i_v = 2
        i_tau = 2 + 2 * n
        nv = i_tau + n + 1

        def split(z):
            q0 = sc * z[:2]
            v = vmax * z[i_v:i_v + 2 * n].reshape(n, 2)
            tau = vmax ** 2 * z[i_tau:i_tau + n]
            return q0, v, tau

        def positions(q0, v):
            mids = 0.5 * dt * (v + np.roll(v, -1, axis=0))
            p = np.empty((n, 2))
            p[0] = q0
            p[1:] = q0 + np.cumsum(mids, axis=0)[:-1]
            return p

        def grad_v_from_grad_p(gp):
            # p[n] depends on v[j] through the trapezoid mids; suffix sums.
            # v[0] only enters mids[0] (its cyclic reappearance in mids[N-1]
            # never reaches a slot position), hence the special first row.
            suffix = np.vstack([np.cumsum(gp[::-1], axis=0)[::-1],
                                np.zeros((1, 2))])
            gv = 0.5 * dt * (suffix[:-1] + suffix[1:])
            gv[0] = 0.5 * dt * suffix[1]
            return gv

        def obj(z):
            g = np.zeros(nv)
            g[-1] = 1.0
            return float(z[-1]), g

        def thr_value(z):
            q0, v, _ = split(z)
            p = positions(q0, v)
            d2 = ((p[None, :, :] - w_users[:, None, :]) ** 2).sum(axis=2)
            return (alpha * (const + slope * d2)).sum(axis=1) / n - z[-1]

        def thr_vjp(z, wv):
            q0, v, _ = split(z)
            p = positions(q0, v)
            diff = p[None, :, :] - w_users[:, None, :]
            gp = np.einsum("k,kn,kn,knd->nd", wv, alpha, slope, diff) * (2.0 / n)
            gv = grad_v_from_grad_p(gp)
            out = np.zeros(nv)
            out[:2] = gp.sum(axis=0) * sc
            out[i_v:i_v + 2 * n] = gv.ravel() * vmax
            out[-1] = -wv.sum()
            return out

        def periodic_value(z):
            return z[i_v:i_v + 2 * n].reshape(n, 2).sum(axis=0)

        def periodic_vjp(z, wv):
            out = np.zeros(nv)
            out[i_v:i_v + 2 * n] = np.tile(wv, n)
            return out

        def speed_cap_value(z):
            zv = z[i_v:i_v + 2 * n].reshape(n, 2)
            return (self.v_hi / vmax) ** 2 - (zv * zv).sum(axis=1)

        def speed_cap_vjp(z, wv):
            zv = z[i_v:i_v + 2 * n].reshape(n, 2)
            out = np.zeros(nv)
            out[i_v:i_v + 2 * n] = (-2.0 * wv[:, None] * zv).ravel()
            return out

        def tau_tangent_value(z):
            zv = z[i_v:i_v + 2 * n].reshape(n, 2)
            ztau = z[i_tau:i_tau + n]
            return 2.0 * (zv_r * zv).sum(axis=1) - (zv_r * zv_r).sum(axis=1) - ztau

        def tau_tangent_vjp(z, wv):
            out = np.zeros(nv)
            out[i_v:i_v + 2 * n] = (2.0 * wv[:, None] * zv_r).ravel()
            out[i_tau:i_tau + n] = -wv
            return out

        def accel_value(z):
            zv = z[i_v:i_v + 2 * n].reshape(n, 2)
            dv = (np.roll(zv, -1, axis=0) - zv) * vmax / dt
            return ((self.a_hi ** 2 - (dv * dv).sum(axis=1))
                    / max(u.a_max, 1.0) ** 2)

        def accel_vjp(z, wv):
            zv = z[i_v:i_v + 2 * n].reshape(n, 2)
            dv = (np.roll(zv, -1, axis=0) - zv) * vmax / dt
            gd = (-2.0 / max(u.a_max, 1.0) ** 2) * wv[:, None] * dv * vmax / dt
            gv = -(gd - np.roll(gd, 1, axis=0))
            out = np.zeros(nv)
            out[i_v:i_v + 2 * n] = gv.ravel()
            return out

        def energy_value(z):
            _, v, tau = split(z)
            speeds3 = np.linalg.norm(v, axis=1) ** 3
            used = (c1 * speeds3 + c2 / np.sqrt(tau)).sum() * dt
            return np.array([(self.e_hi - used) / e_max])

        def energy_vjp(z, wv):
            _, v, tau = split(z)
            speeds = np.linalg.norm(v, axis=1)
            gv = -3.0 * c1 * speeds[:, None] * v * dt * wv[0] / e_max
            gtau = 0.5 * c2 * tau ** -1.5 * dt * wv[0] / e_max
            out = np.zeros(nv)
            out[i_v:i_v + 2 * n] = gv.ravel() * vmax
            out[i_tau:i_tau + n] = gtau * vmax ** 2
            return out

        constraints = [
            ConstraintBlock("throughput", "ineq", k_cnt, thr_value, thr_vjp),
            ConstraintBlock("periodic", "eq", 2, periodic_value, periodic_vjp),
            ConstraintBlock("speed_cap", "ineq", n, speed_cap_value,
                            speed_cap_vjp),
            ConstraintBlock("tau_tangent", "ineq", n, tau_tangent_value,
                            tau_tangent_vjp),
            ConstraintBlock("energy", "ineq", 1, energy_value, energy_vjp),
        ]
        if math.isfinite(u.a_max):
            constraints.append(ConstraintBlock("accel", "ineq", n,
                                               accel_value, accel_vjp))

        lower = np.full(nv, -np.inf)
        upper = np.full(nv, np.inf)
        lower[i_tau:i_tau + n] = (self.v_lo / vmax) ** 2
        upper[i_tau:i_tau + n] = 1.0
        tau0 = (v_r ** 2).sum(axis=1) / vmax ** 2
        eta0 = float(plan.per_user_throughput.min())
        z0 = np.concatenate([q0_r / sc, (v_r / vmax).ravel(),
                             np.clip(tau0, (self.v_lo / vmax) ** 2, 1.0),
                             [eta0]])
        spec = SubproblemSpec(n_vars=nv, objective=obj,
                              constraints=constraints, lower=lower,
                              upper=upper)
        sol = solve_convex_subproblem(spec, z0, self.tol,
                                      initial_multipliers=self._mults)
        self._mults = sol.multipliers
        q0_new = sc * sol.x[:2]
        v_new = vmax * sol.x[i_v:i_v + 2 * n].reshape(n, 2)
        traj_new = self._restore(q0_new, v_new)
        # reject pathological steps instead of returning an infeasible plan
        report = kinematic_residuals(traj_new, u, self.s.grid)
        if not report.feasible:
            return plan
        if trajectory_energy(traj_new, self.s.grid, self.s.energy) > e_max:
            return plan
        return make_plan(self.s, (traj_new,), plan.schedule, plan.powers)


def _energy_init(s: Scenario) -> Plan:
    u = s.uavs[0]
    v_char = characteristic_speeds(s.energy).min_power_speed
    hi = min(u.v_max, max_feasible_circle_speed(s, 0, FULL_KINEMATIC))
    hi *= 1.0 - INIT_MARGIN
    lo = u.v_min * (1.0 + INIT_MARGIN)
    if lo > hi:
        raise InfeasibleBudgetError(
            f"no feasible circle speed: v_min {u.v_min} vs attainable "
            f"maximum {hi:.6g}")
    speed = min(max(v_char, lo), hi)
    traj = circular_initial_trajectory(s, 0, speed, FULL_KINEMATIC)
    e0 = trajectory_energy(traj, s.grid, s.energy)
    if e0 > u.energy_budget:
        raise InfeasibleBudgetError(
            f"energy budget {u.energy_budget} J is below the least-energy "
            f"circular initialization ({e0:.6g} J at {speed:.6g} m/s)")
    powers = full_power_profile(s)
    sched, _, _ = schedule_lp(s, (traj,), powers)
    return make_plan(s, (traj,), sched, powers)


def plan_energy_constrained(s: Scenario, config: BcdConfig | None = None,
                            initial: Plan | None = None) -> SolveReport:
    """P3: single fixed-wing UAV under a propulsion energy budget."""
    if s.n_uavs != 1:
        raise ValueError("plan_energy_constrained requires exactly one UAV")
    if s.energy.kind != FIXED_WING:
        raise ValueError("plan_energy_constrained requires a fixed-wing "
                         f"energy model (got {s.energy.kind!r})")
    u = s.uavs[0]
    if u.energy_budget is None:
        raise ValueError("uavs[0].energy_budget is required for the "
                         "energy-constrained problem")
    if u.v_min <= 0:
        raise ValueError("fixed-wing flight requires v_min > 0 "
                         "(power diverges at zero speed)")
    config = config or BcdConfig()
    warm = initial is not None
    if not warm:
        initial = _energy_init(s)
    problem = _EnergyProblem(s, config.subproblem_tol)
    report = bcd_solve(problem, initial, config)
    report.warm_started = warm
    return report


# --------------------------------------------------------------------------
# Delay metrics and plan export

def longest_service_gaps(schedule: Schedule, grid) -> np.ndarray:
    """Per-user longest wait between service slots, in seconds (cyclic).

    A user never served waits the whole period."""
    m_cnt, k_cnt, n_cnt = schedule.alpha.shape
    served = schedule.alpha.sum(axis=0) > SERVICE_THRESHOLD
    out = np.empty(k_cnt)
    for k in range(k_cnt):
        idx = np.nonzero(served[k])[0]
        if idx.size == 0:
            out[k] = grid.period
        elif idx.size == 1:
            out[k] = grid.period
        else:
            gaps = np.diff(idx)
            wrap = idx[0] + n_cnt - idx[-1]
            out[k] = max(gaps.max(), wrap) * grid.slot_len
    return out


def plan_report_dict(s: Scenario, report: SolveReport,
                     config: BcdConfig | None = None) -> dict:
    plan: Plan = report.plan
    residuals = []
    for u, traj in zip(s.uavs, plan.trajectories):
        r = kinematic_residuals(traj, u, s.grid)
        residuals.append({
            "uav": u.id,
            "max_kinematic_residual_m": r.max_kinematic_residual,
            "max_speed_violation_mps": r.max_speed_violation,
            "max_accel_violation_mps2": r.max_accel_violation,
            "periodicity_gap_m": r.periodicity_gap,
            "feasible": r.feasible,
        })
    energy_used = None
    if (s.energy.kind != NO_ENERGY_MODEL
            and all(t.fidelity == FULL_KINEMATIC for t in plan.trajectories)):
        energy_used = sum(trajectory_energy(t, s.grid, s.energy)
                          for t in plan.trajectories)
    out = {
        "status": report.status,
        "iterations": report.iterations,
        "common_throughput_bpshz": plan.common_throughput,
        "per_user_throughput_bpshz": list(map(float,
                                              plan.per_user_throughput)),
        "objective_trace": list(map(float, report.objective_trace)),
        "iteration_times_s": list(map(float, report.iteration_times_s)),
        "termination_reason": report.termination_reason,
        "wall_time_s": report.wall_time_s,
        "worst_case_delay_s": s.grid.period,
        "longest_service_gap_s": list(map(float, longest_service_gaps(
            plan.schedule, s.grid))),
        "energy_used_j": energy_used,
        "kinematic_residuals": residuals,
        "warm_started": report.warm_started,
        "tolerances": (config or BcdConfig()).tolerances_dict(),
    }
    return out


def export_plan(out_dir, s: Scenario, scenario_text: str,
                report: SolveReport, config: BcdConfig | None = None,
                warm_start_source: str | None = None) -> None:
    """Write the full plan artifact set: one trajectory CSV per UAV,
    schedule/powers/rates CSVs, report.json, manifest.json."""
    from .artifacts import dump_json, write_manifest

    os.makedirs(out_dir, exist_ok=True)
    plan: Plan = report.plan
    for u, traj in zip(s.uavs, plan.trajectories):
        path = os.path.join(out_dir, f"trajectory_{u.id}.csv")
        with open(path, "w", encoding="utf-8") as fh:
            export_trajectory_csv(traj, s.grid, fh)
    with open(os.path.join(out_dir, "schedule.csv"), "w", encoding="utf-8") as fh:
        export_schedule_csv(plan.schedule, fh)
    with open(os.path.join(out_dir, "powers.csv"), "w", encoding="utf-8") as fh:
        export_powers_csv(plan.powers, fh)
    with open(os.path.join(out_dir, "rates.csv"), "w", encoding="utf-8") as fh:
        export_rates_csv(s, plan.trajectories, plan.schedule, plan.powers, fh)
    dump_json(plan_report_dict(s, report, config),
              os.path.join(out_dir, "report.json"))
    write_manifest(os.path.join(out_dir, "manifest.json"), scenario_text,
                   tolerances=(config or BcdConfig()).tolerances_dict(),
                   warm_start_source=warm_start_source)
