"""Block coordinate descent driver shared by all planners.

A problem exposes named blocks; each block update solves one convex
subproblem (scheduling LP, power SCA step, or trajectory SCA step) and
returns a full candidate plan.  The driver accepts a block result only if
the true (non-surrogate) objective does not decrease, which keeps the
reported objective trace monotone regardless of subproblem tolerance dust.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Protocol

from .auglag import SubproblemInfeasibleError, Tolerances


class BlockProblem(Protocol):
    """Interface the planners implement for bcd_solve."""

    blocks: tuple[str, ...]

    def update(self, name: str, plan):
        """Solve the named block with the rest of the plan fixed."""

    def objective(self, plan) -> float:
        """True max-min throughput of a plan, no surrogates."""


@dataclass(frozen=True)
class BcdConfig:
    max_outer_iters: int = 100
    tol_monotone: float = 1e-6
    block_order: tuple[str, ...] | None = None  # None: problem's own order
    subproblem_tol: Tolerances = field(default_factory=Tolerances)

    def tolerances_dict(self) -> dict:
        out = self.subproblem_tol.as_dict()
        out["tol_monotone"] = self.tol_monotone
        out["max_outer_iters"] = self.max_outer_iters
        return out


@dataclass
class SolveReport:
    """Outcome of one BCD run; `plan` is problem-specific."""

    status: str                    # "converged" | "max-iters"
    iterations: int
    objective: float
    objective_trace: list[float]   # entry 0 is the initial plan
    termination_reason: str
    wall_time_s: float
    plan: object
    iteration_times_s: list[float] = field(default_factory=list)
    stalled_blocks: list[str] = field(default_factory=list)
    warm_started: bool = False


class BcdFailure(RuntimeError):
    """A block subproblem failed; carries the partial trace for reporting."""

    def __init__(self, message: str, iteration: int, block: str,
                 objective_trace: list[float], plan):
        super().__init__(message)
        self.iteration = iteration
        self.block = block
        self.objective_trace = objective_trace
        self.plan = plan


def bcd_solve(problem: BlockProblem, initial_plan,
              config: BcdConfig = BcdConfig()) -> SolveReport:
    t0 = time.perf_counter()
    order = config.block_order or tuple(problem.blocks)
    unknown = [b for b in order if b not in problem.blocks]
    if unknown:
        raise ValueError(f"unknown blocks {unknown}; "
                         f"problem has {list(problem.blocks)}")

    plan = initial_plan
    current = problem.objective(plan)
    trace = [current]
    stalled: list[str] = []
    status = "max-iters"
    reason = (f"no convergence within {config.max_outer_iters} iterations")
    iterations = 0
    iter_times: list[float] = []

    for it in range(1, config.max_outer_iters + 1):
        iterations = it
        t_iter = time.perf_counter()
        stalled = []
        for name in order:
            try:
                candidate = problem.update(name, plan)
            except SubproblemInfeasibleError as e:
                raise BcdFailure(
                    f"block {name!r} infeasible at iteration {it}: {e}",
                    iteration=it, block=name, objective_trace=trace,
                    plan=plan) from e
            value = problem.objective(candidate)
            # exact block solves cannot decrease the true objective; guard
            # against tolerance dust by keeping the incumbent otherwise
            if value >= current - 1e-12:
                plan = candidate
                current = max(current, value)
            else:
                stalled.append(name)
        trace.append(current)
        iter_times.append(time.perf_counter() - t_iter)
        gain = trace[-1] - trace[-2]
        if gain < config.tol_monotone:
            status = "converged"
            reason = (f"objective gain {gain:.3e} below tol_monotone "
                      f"{config.tol_monotone:.1e} at iteration {it}")
            break

    return SolveReport(
        status=status,
        iterations=iterations,
        objective=current,
        objective_trace=trace,
        termination_reason=reason,
        wall_time_s=time.perf_counter() - t0,
        plan=plan,
        iteration_times_s=iter_times,
        stalled_blocks=stalled,
    )
