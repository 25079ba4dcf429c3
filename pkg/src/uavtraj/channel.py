"""LoS air-to-ground channel gains, link/SINR rates, and throughput aggregation.

The channel gain follows the free-space square law: beta0 over squared 3D
distance.  Rates are spectral efficiencies in bps/Hz (unit bandwidth).
Fractional time-sharing (relaxed TDMA) is the canonical schedule
representation; binary schedules are the special case alpha in {0, 1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kinematics import Trajectory
from .scenario import Scenario

LN2 = math.log(2.0)

# numerical dust allowed on schedule/power invariants before they count
# as violations
INVARIANT_SLACK = 1e-9


class InvariantViolation(ValueError):
    """A schedule or power profile violates its declared invariants."""


def los_gain(uav_pos, altitude: float, user_pos, beta0: float) -> float:
    """Linear channel power gain beta0 / (altitude^2 + horizontal_dist^2)."""
    d = np.asarray(uav_pos, dtype=float) - np.asarray(user_pos, dtype=float)
    return beta0 / (altitude ** 2 + float(d @ d))


def link_rate(gain: float, power: float, noise: float) -> float:
    """Interference-free spectral efficiency log2(1 + power*gain/noise)."""
    return math.log2(1.0 + power * gain / noise)


@dataclass(frozen=True, eq=False)
class Schedule:
    """Time-sharing fractions alpha[m, k, n] in [0, 1].

    Per UAV and slot the fractions over users sum to at most 1 (TDMA);
    per user and slot the fractions over UAVs sum to at most 1.
    """

    alpha: np.ndarray  # (M, K, N)

    def __post_init__(self):
        a = np.ascontiguousarray(self.alpha, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)

    def violations(self) -> list[str]:
        out = []
        a = self.alpha
        if a.min() < -INVARIANT_SLACK or a.max() > 1.0 + INVARIANT_SLACK:
            out.append(f"schedule entries outside [0, 1] "
                       f"(min {a.min():.3e}, max {a.max():.3e})")
        per_uav = a.sum(axis=1)
        if per_uav.max() > 1.0 + INVARIANT_SLACK:
            out.append(f"per-UAV time shares exceed 1 (max {per_uav.max():.12g})")
        per_user = a.sum(axis=0)
        if per_user.max() > 1.0 + INVARIANT_SLACK:
            out.append(f"per-user time shares exceed 1 (max {per_user.max():.12g})")
        return out


@dataclass(frozen=True, eq=False)
class PowerProfile:
    """Transmit powers p[m, n] in watts, bounded by each UAV's cap."""

    p: np.ndarray  # (M, N)

    def __post_init__(self):
        a = np.ascontiguousarray(self.p, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "p", a)

    def violations(self, s: Scenario) -> list[str]:
        out = []
        if self.p.min() < -INVARIANT_SLACK:
            out.append(f"negative transmit power (min {self.p.min():.3e})")
        for m, uav in enumerate(s.uavs):
            cap = uav.tx_power
            if self.p[m].max() > cap * (1.0 + INVARIANT_SLACK):
                out.append(f"uav {uav.id!r} power exceeds cap {cap} "
                           f"(max {self.p[m].max():.12g})")
        return out


def full_power_profile(s: Scenario) -> PowerProfile:
    """All UAVs pinned at their maximum transmit power."""
    caps = np.array([u.tx_power for u in s.uavs], dtype=float)
    return PowerProfile(p=np.tile(caps[:, None], (1, s.grid.slot_count)))


def uniform_schedule(s: Scenario) -> Schedule:
    """Every UAV splits each slot equally over all users."""
    m, k, n = s.n_uavs, s.n_users, s.grid.slot_count
    share = 1.0 / max(k, m)  # keep the per-user sums feasible too
    return Schedule(alpha=np.full((m, k, n), share))


def gain_tensor(s: Scenario, trajectories) -> np.ndarray:
    """Channel gains h[m, k, n] for each UAV/user pair over the slot grid."""
    k = s.n_users
    n = s.grid.slot_count
    w = np.array([u.position for u in s.users], dtype=float)  # (K, 2)
    out = np.empty((s.n_uavs, k, n))
    for m, (uav, traj) in enumerate(zip(s.uavs, trajectories)):
        q = traj.slot_positions  # (N, 2)
        d2 = ((q[None, :, :] - w[:, None, :]) ** 2).sum(axis=2)  # (K, N)
        out[m] = s.channel.beta0 / (uav.altitude ** 2 + d2)
    return out


def sinr_rate(serving_uav: int, user: int, slot: int, gains: np.ndarray,
              powers: PowerProfile, noise: float) -> float:
    """Rate of `user` at `slot` when served by `serving_uav`, all other
    UAVs transmitting co-channel."""
    p = powers.p[:, slot]
    h = gains[:, user, slot]
    received = p * h
    signal = received[serving_uav]
    interference = received.sum() - signal
    return math.log2(1.0 + signal / (noise + interference))


def per_slot_rates(s: Scenario, gains: np.ndarray,
                   powers: PowerProfile) -> np.ndarray:
    """SINR rates r[m, k, n] for every (serving UAV, user, slot) triple."""
    received = powers.p[:, None, :] * gains              # (M, K, N)
    total = received.sum(axis=0, keepdims=True)          # (1, K, N)
    interference = total - received
    return np.log2(1.0 + received / (s.channel.noise_power + interference))


def _check_plan_invariants(s: Scenario, schedule: Schedule,
                           powers: PowerProfile) -> None:
    problems = schedule.violations() + powers.violations(s)
    if problems:
        raise InvariantViolation("; ".join(problems))


def common_throughput(s: Scenario, trajectories, schedule: Schedule,
                      powers: PowerProfile,
                      method: str = "batch") -> tuple[np.ndarray, float]:
    """Per-user time-averaged throughputs and their minimum R_com.

    throughput_k = (1/N) * sum_n sum_m alpha[m,k,n] * sinr_rate(m,k,n).
    The streaming method accumulates slot by slot and exists to cross-check
    the vectorized batch path.
    """
    _check_plan_invariants(s, schedule, powers)
    gains = gain_tensor(s, trajectories)
    n = s.grid.slot_count
    if method == "batch":
        rates = per_slot_rates(s, gains, powers)
        per_user = (schedule.alpha * rates).sum(axis=(0, 2)) / n
    elif method == "streaming":
        per_user = np.zeros(s.n_users)
        noise = s.channel.noise_power
        for slot in range(n):
            for k in range(s.n_users):
                acc = 0.0
                for m in range(s.n_uavs):
                    a = schedule.alpha[m, k, slot]
                    if a > 0.0:
                        acc += a * sinr_rate(m, k, slot, gains, powers, noise)
                per_user[k] += acc
        per_user /= n
    else:
        raise ValueError(f"unknown method {method!r}")
    return per_user, float(per_user.min())


# --------------------------------------------------------------------------
# Export

def export_schedule_csv(schedule: Schedule, fh) -> None:
    from .artifacts import fmt

    fh.write("slot,uav,user,alpha\n")
    m_cnt, k_cnt, n_cnt = schedule.alpha.shape
    for n in range(n_cnt):
        for m in range(m_cnt):
            for k in range(k_cnt):
                fh.write(f"{n},{m},{k},{fmt(schedule.alpha[m, k, n])}\n")


def export_powers_csv(powers: PowerProfile, fh) -> None:
    from .artifacts import fmt

    fh.write("slot,uav,p_w\n")
    m_cnt, n_cnt = powers.p.shape
    for n in range(n_cnt):
        for m in range(m_cnt):
            fh.write(f"{n},{m},{fmt(powers.p[m, n])}\n")


def export_rates_csv(s: Scenario, trajectories, schedule: Schedule,
                     powers: PowerProfile, fh) -> None:
    """Per-slot scheduled rate trace: sum_m alpha[m,k,n]*rate[m,k,n]."""
    from .artifacts import fmt

    rates = per_slot_rates(s, gain_tensor(s, trajectories), powers)
    scheduled = (schedule.alpha * rates).sum(axis=0)  # (K, N)
    fh.write("slot,user,rate_bpshz\n")
    for n in range(scheduled.shape[1]):
        for k in range(scheduled.shape[0]):
            fh.write(f"{n},{k},{fmt(scheduled[k, n])}\n")
