"""Brute-force validators for tiny instances.

Two independent routes to ground the optimizer: exhaustive binary
scheduling on a fixed trajectory, and exhaustive grid search over waypoint
sequences.  Both are deterministic (lexicographic enumeration, strictly
greater wins) so results are independent of evaluation order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channel import Schedule, full_power_profile, gain_tensor, per_slot_rates
from .kinematics import WAYPOINT_ONLY, Trajectory, circular_initial_trajectory
from .planners import max_min_schedule_from_rates
from .scenario import Scenario

EVAL_CAP = 1e8          # refuse enumerations beyond this many candidates
MAX_ORACLE_SLOTS = 6


class InstanceTooLargeError(ValueError):
    """The requested enumeration exceeds the documented candidate cap."""


@dataclass(frozen=True)
class GridSpec:
    """Search space for the trajectory oracle.

    bounds: ((x_min, x_max), (y_min, y_max)) in meters; ignored when
    restrict_to_segment confines nodes to the segment between the first
    two users.  step is the maximum node spacing.
    """

    bounds: tuple[tuple[float, float], tuple[float, float]]
    step: float
    slot_count: int
    restrict_to_segment: bool = False

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("GridSpec.step must be positive")
        if not 1 <= self.slot_count <= MAX_ORACLE_SLOTS:
            raise ValueError(f"GridSpec.slot_count must be in "
                             f"[1, {MAX_ORACLE_SLOTS}]")


@dataclass(frozen=True)
class OracleResult:
    trajectory: Trajectory
    schedule: Schedule
    common_throughput: float
    candidates_evaluated: int
    epsilon_grid: float


def brute_force_schedule(s: Scenario,
                         trajectory: Trajectory) -> tuple[Schedule, float]:
    """Best binary (one user per slot) schedule by exhaustive enumeration.

    Lexicographically first assignment wins ties.  The fractional LP
    dominates this value; the gap is at most max slot rate / N.
    """
    if s.n_uavs != 1:
        raise ValueError("brute_force_schedule is a single-UAV oracle")
    k, n = s.n_users, s.grid.slot_count
    if not ((k == 2 and n <= 12) or n * k <= 20):
        raise InstanceTooLargeError(
            f"binary enumeration needs K=2 with N<=12 or N*K<=20 "
            f"(got K={k}, N={n}: {k}**{n} = {k ** n} candidates)")
    rates = per_slot_rates(s, gain_tensor(s, (trajectory,)),
                           full_power_profile(s))[0]  # (K, N)

    best_val = -1.0
    best_assign = None
    for assign in itertools.product(range(k), repeat=n):
        thr = np.zeros(k)
        for slot, user in enumerate(assign):
            thr[user] += rates[user, slot]
        val = thr.min() / n
        if val > best_val:
            best_val = val
            best_assign = assign

    alpha = np.zeros((1, k, n))
    for slot, user in enumerate(best_assign):
        alpha[0, user, slot] = 1.0
    return Schedule(alpha=alpha), float(best_val)


# --------------------------------------------------------------------------
# Grid-search trajectory oracle

def _node_rates(s: Scenario, nodes: np.ndarray) -> np.ndarray:
    """Interference-free rate of each user from each candidate node (J, K)."""
    u = s.uavs[0]
    w = np.array([usr.position for usr in s.users], dtype=float)
    d2 = ((nodes[:, None, :] - w[None, :, :]) ** 2).sum(axis=2)
    gamma = u.tx_power * s.channel.beta0 / s.channel.noise_power
    return np.log2(1.0 + gamma / (u.altitude ** 2 + d2))


def _grid_nodes(s: Scenario, grid: GridSpec) -> np.ndarray:
    if grid.restrict_to_segment:
        if s.n_users < 2:
            raise ValueError("restrict_to_segment needs at least two users")
        a = np.asarray(s.users[0].position, dtype=float)
        b = np.asarray(s.users[1].position, dtype=float)
        length = float(np.linalg.norm(b - a))
        count = max(2, int(math.ceil(length / grid.step)) + 1)
        t = np.linspace(0.0, 1.0, count)
        return a[None, :] + t[:, None] * (b - a)[None, :]
    (x0, x1), (y0, y1) = grid.bounds
    if not (x1 >= x0 and y1 >= y0):
        raise ValueError("GridSpec.bounds must be non-empty intervals")
    nx = max(2, int(math.ceil((x1 - x0) / grid.step)) + 1) if x1 > x0 else 1
    ny = max(2, int(math.ceil((y1 - y0) / grid.step)) + 1) if y1 > y0 else 1
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def _ratio_split_value(r1: np.ndarray, r2: np.ndarray) -> float:
    """Exact K=2 max-min fractional schedule value on fixed slot rates.

    Equalizes the two throughputs by assigning slots to user 1 in
    decreasing r1/r2 order with one fractional boundary slot; this is the
    LP optimum (threshold structure of the max-min vertex).
    """
    n = r1.shape[0]
    total2 = r2.sum()
    if r1.sum() <= 0.0 or total2 <= 0.0:
        return 0.0
    order = np.lexsort((np.arange(n), -np.where(r2 > 0, r1 / np.maximum(r2, 1e-300), np.inf)))
    a = r1[order]
    b = r2[order]
    pre1 = 0.0      # user-1 throughput so far (times N)
    suf2 = total2   # user-2 throughput if everything from here stays with 2
    for i in range(n):
        suf2 -= b[i]
        if pre1 + a[i] >= suf2:  # crossing slot: split it
            denom = a[i] + b[i]
            if denom <= 0.0:
                return pre1 / n
            x = (suf2 + b[i] - pre1) / denom
            x = min(max(x, 0.0), 1.0)
            return (pre1 + x * a[i]) / n
        pre1 += a[i]
    return suf2 / n  # unreachable for positive rates; defensive


def _lp_value(rates_kn: np.ndarray) -> float:
    alpha = max_min_schedule_from_rates(rates_kn[None, :, :])
    n = rates_kn.shape[1]
    return float(((alpha[0] * rates_kn).sum(axis=1) / n).min())


def epsilon_grid(s: Scenario, grid: GridSpec) -> float:
    """Certified value slack for grid discretization: Lipschitz constant of
    the link rate in UAV position (maximized over the search box) times the
    grid step.  Moving every waypoint by at most one step changes the
    optimal schedule's value by at most this much.
    """
    u = s.uavs[0]
    a = u.altitude ** 2
    gamma = u.tx_power * s.channel.beta0 / s.channel.noise_power
    b = a + gamma
    # corners of the search region (segment endpoints when restricted)
    if grid.restrict_to_segment:
        corners = [np.asarray(s.users[0].position, dtype=float),
                   np.asarray(s.users[1].position, dtype=float)]
    else:
        (x0, x1), (y0, y1) = grid.bounds
        corners = [np.array([x, y]) for x in (x0, x1) for y in (y0, y1)]
    d_max = max(float(np.linalg.norm(c - np.asarray(usr.position)))
                for c in corners for usr in s.users)
    # |d rate / d position| = 2*gamma*d / (ln2 (a+d^2)(b+d^2)); unimodal in
    # d with interior max at t* = d*^2 solving 3t^2 + (a+b)t - ab = 0
    t_star = (-(a + b) + math.sqrt((a + b) ** 2 + 12.0 * a * b)) / 6.0
    d = min(math.sqrt(t_star), d_max)
    lip = 2.0 * gamma * d / (math.log(2.0) * (a + d * d) * (b + d * d))
    return lip * grid.step


def grid_search_trajectory(s: Scenario, grid: GridSpec) -> OracleResult:
    """Exhaustive search over periodic waypoint sequences on grid nodes.

    Consecutive waypoints (cyclically) must respect the chord speed limit.
    Sequences are enumerated lexicographically over node indices and scored
    by the max-min schedule value; the first maximizer wins.  K=2 instances
    use the exact ratio-split scorer, anything else the scheduling LP; the
    winning sequence is always rescored through the LP.
    """
    if s.n_uavs != 1:
        raise ValueError("grid_search_trajectory is a single-UAV oracle")
    if s.grid.slot_count != grid.slot_count:
        raise ValueError(
            f"scenario slot_count {s.grid.slot_count} != GridSpec slot_count "
            f"{grid.slot_count}; the oracle scores on the scenario grid")
    n = grid.slot_count
    nodes = _grid_nodes(s, grid)
    j_cnt = nodes.shape[0]
    if float(j_cnt) ** n > EVAL_CAP:
        raise InstanceTooLargeError(
            f"{j_cnt} nodes over {n} slots is {j_cnt ** n:.3g} candidates "
            f"(cap {EVAL_CAP:.0e})")

    cap = s.uavs[0].v_max * s.grid.slot_len + 1e-9  # dust for exact chords
    dists = np.linalg.norm(nodes[:, None, :] - nodes[None, :, :], axis=2)
    adj = [np.nonzero(dists[j] <= cap)[0] for j in range(j_cnt)]
    r_node = _node_rates(s, nodes)  # (J, K)
    k_cnt = s.n_users
    use_split = k_cnt == 2

    best_val = -1.0
    best_seq: tuple[int, ...] | None = None
    evaluated = 0
    seq = np.empty(n, dtype=int)

    def descend(depth: int):
        nonlocal best_val, best_seq, evaluated
        if depth == n:
            if dists[seq[n - 1], seq[0]] > cap:
                return
            evaluated += 1
            r = r_node[seq]  # (N, K)
            if use_split:
                val = _ratio_split_value(r[:, 0], r[:, 1])
            else:
                val = _lp_value(r.T)
            if val > best_val:
                best_val = val
                best_seq = tuple(int(j) for j in seq)
            return
        choices = range(j_cnt) if depth == 0 else adj[seq[depth - 1]]
        for j in choices:
            seq[depth] = j
            descend(depth + 1)

    descend(0)
    if best_seq is None:
        raise RuntimeError("no feasible waypoint sequence on the grid")

    positions = np.vstack([nodes[list(best_seq)], nodes[best_seq[0]][None]])
    traj = Trajectory(positions=positions, fidelity=WAYPOINT_ONLY)
    rates = r_node[list(best_seq)].T  # (K, N)
    alpha = max_min_schedule_from_rates(rates[None, :, :])
    r_com = float(((alpha[0] * rates).sum(axis=1) / n).min())
    return OracleResult(trajectory=traj, schedule=Schedule(alpha=alpha),
                        common_throughput=r_com,
                        candidates_evaluated=evaluated,
                        epsilon_grid=epsilon_grid(s, grid))


def best_constant_speed_circle(s: Scenario, speeds) -> tuple[float, float]:
    """1D oracle for the energy-constrained design: enumerate constant
    circle speeds (full kinematics), skip any that break the energy budget,
    and return (speed, R_com) of the best scheduling-LP value."""
    from .energy import trajectory_energy
    from .kinematics import FULL_KINEMATIC
    from .planners import schedule_lp

    u = s.uavs[0]
    powers = full_power_profile(s)
    best: tuple[float, float] | None = None
    for v in speeds:
        try:
            traj = circular_initial_trajectory(s, 0, v, FULL_KINEMATIC)
        except ValueError:
            continue
        if (u.energy_budget is not None
                and trajectory_energy(traj, s.grid, s.energy) > u.energy_budget):
            continue
        _, _, r_com = schedule_lp(s, (traj,), powers)
        if best is None or r_com > best[1]:
            best = (float(v), r_com)
    if best is None:
        raise ValueError("no feasible circle speed among the candidates")
    return best
