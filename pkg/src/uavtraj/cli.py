"""Command-line front end: solve single scenarios, run tradeoff sweeps,
emit propulsion power curves, run brute-force oracles, validate configs.

Exit codes: 0 ok, 2 input error, 3 solver failure, 4 partial sweep failure.
All artifacts use the shared 9-significant-digit float format so identical
inputs produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import os
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from .artifacts import dump_json, fmt, write_manifest
from .bcd import BcdConfig, BcdFailure, SolveReport
from .channel import PowerProfile, full_power_profile
from .energy import EnergyDomainError, propulsion_power, trajectory_energy
from .kinematics import FULL_KINEMATIC, kinematic_residuals
from .oracle import GridSpec, InstanceTooLargeError, grid_search_trajectory
from .planners import (ENERGY_MARGIN, InfeasibleBudgetError, Plan,
                       export_plan, make_plan, plan_energy_constrained,
                       plan_multi_uav_iuic, plan_single_uav_delay)
from .scenario import (FIXED_WING, ROTARY_WING, EnergyModelParams, Scenario,
                       ScenarioFormatError, load_scenario, render_scenario,
                       validate_scenario)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_PARTIAL = 4

PROBLEMS = ("delay", "iuic", "energy")
SWEEP_PARAMS = ("period_s", "energy_budget_j", "power_control")

# defaults for the energy-curve subcommand (c1/c2 are the fixed-wing
# constants used throughout the shipped scenarios; the rotary set is the
# usual reference loadout)
FIXED_WING_C1 = 9.26e-4
FIXED_WING_C2 = 2250.0
ROTARY_DEFAULTS = {
    "blade_profile_power": 79.8563,
    "induced_power": 88.6279,
    "tip_speed": 120.0,
    "rotor_induced_velocity": 4.03,
    "parasite_coeff": 0.018485,
}


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_scenario_path(path: str) -> tuple[Scenario, str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ScenarioFormatError(f"cannot read scenario {path!r}: "
                                  f"{e.strerror or e}") from e
    return load_scenario(text), text


def _problem_mismatch(s: Scenario, problem: str,
                      assume_budget: bool = False) -> str | None:
    if problem == "delay" and s.n_uavs != 1:
        return (f"--problem delay needs exactly one UAV "
                f"(scenario has {s.n_uavs})")
    if problem == "iuic" and s.n_uavs < 2:
        return (f"--problem iuic needs at least two UAVs "
                f"(scenario has {s.n_uavs})")
    if problem == "energy":
        if s.n_uavs != 1:
            return (f"--problem energy needs exactly one UAV "
                    f"(scenario has {s.n_uavs})")
        if s.energy.kind != FIXED_WING:
            return ("--problem energy requires energy.kind fixed-wing "
                    f"(scenario has {s.energy.kind!r})")
        if s.uavs[0].energy_budget is None and not assume_budget:
            return ("scenario lacks uavs[0].energy_budget_j, required by "
                    "--problem energy")
        if s.uavs[0].v_min <= 0:
            return ("--problem energy requires uavs[0].v_min_mps > 0 "
                    "(fixed-wing power diverges at zero speed)")
    return None


def _config_from_args(args) -> BcdConfig:
    return BcdConfig(max_outer_iters=args.max_iters,
                     tol_monotone=args.tol_monotone)


def _dispatch_solve(s: Scenario, problem: str, power_control: bool,
                    config: BcdConfig, initial: Plan | None = None
                    ) -> SolveReport:
    if problem == "delay":
        return plan_single_uav_delay(s, config, initial=initial)
    if problem == "iuic":
        return plan_multi_uav_iuic(s, power_control=power_control,
                                   config=config, initial=initial)
    return plan_energy_constrained(s, config, initial=initial)


def _write_failure_report(out_dir: str, scenario_text: str, message: str,
                          config: BcdConfig,
                          trace: list[float] | None = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    dump_json({
        "status": "failed",
        "error": message,
        "objective_trace": list(map(float, trace or [])),
        "tolerances": config.tolerances_dict(),
    }, os.path.join(out_dir, "report.json"))
    write_manifest(os.path.join(out_dir, "manifest.json"), scenario_text,
                   tolerances=config.tolerances_dict())


# --------------------------------------------------------------------------
# solve

def run_solve(args) -> int:
    try:
        s, text = _load_scenario_path(args.scenario)
    except ScenarioFormatError as e:
        return _fail(EXIT_INPUT, str(e))
    mismatch = _problem_mismatch(s, args.problem)
    if mismatch:
        return _fail(EXIT_INPUT, mismatch)
    config = _config_from_args(args)
    try:
        report = _dispatch_solve(s, args.problem,
                                 args.power_control == "on", config)
    except BcdFailure as e:
        _write_failure_report(args.out, text, str(e), config,
                              trace=e.objective_trace)
        return _fail(EXIT_SOLVER, f"solver failed: {e}")
    except InfeasibleBudgetError as e:
        _write_failure_report(args.out, text, str(e), config)
        return _fail(EXIT_SOLVER, str(e))
    export_plan(args.out, s, text, report, config)
    print(f"R_com = {fmt(report.objective)} bps/Hz after "
          f"{report.iterations} iterations ({report.status}); "
          f"artifacts in {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# sweep

@dataclass(frozen=True)
class SweepSpec:
    """One tradeoff-curve run: a base scenario with one swept parameter."""

    scenario_path: str
    param: str                  # period_s | energy_budget_j | power_control
    values: tuple
    problem: str                # delay | iuic | energy
    out_dir: str

    def problems(self) -> list[str]:
        out = []
        if self.param not in SWEEP_PARAMS:
            out.append(f"unknown sweep parameter {self.param!r}")
        if self.problem not in PROBLEMS:
            out.append(f"unknown problem {self.problem!r}")
        if not self.values:
            out.append("value list is empty")
        if self.param == "power_control":
            if self.problem != "iuic":
                out.append("power_control sweeps require --problem iuic")
            bad = [v for v in self.values if v not in ("on", "off")]
            if bad:
                out.append(f"power_control values must be on/off, got {bad}")
        else:
            vals = list(self.values)
            if any(b <= a for a, b in zip(vals, vals[1:])):
                out.append(f"values must be strictly increasing, got {vals}")
        return out


def _derive_scenario(s: Scenario, param: str, value) -> Scenario:
    if param == "period_s":
        return replace(s, grid=replace(s.grid, period=float(value)))
    if param == "energy_budget_j":
        uav0 = replace(s.uavs[0], energy_budget=float(value))
        return replace(s, uavs=(uav0,) + tuple(s.uavs[1:]))
    return s  # power_control changes the solver flag, not the scenario


def _warm_initial(new_s: Scenario, prev_plan: Plan,
                  problem: str) -> Plan | None:
    """Re-check a previous sweep point's plan against the new scenario;
    None means restart cold."""
    try:
        if len(prev_plan.trajectories) != new_s.n_uavs:
            return None
        shape = (new_s.n_uavs, new_s.n_users, new_s.grid.slot_count)
        if prev_plan.schedule.alpha.shape != shape:
            return None
        for u, t in zip(new_s.uavs, prev_plan.trajectories):
            if t.n_slots != new_s.grid.slot_count:
                return None
            if not kinematic_residuals(t, u, new_s.grid).feasible:
                return None
        if problem == "energy":
            if any(t.fidelity != FULL_KINEMATIC
                   for t in prev_plan.trajectories):
                return None
            used = sum(trajectory_energy(t, new_s.grid, new_s.energy)
                       for t in prev_plan.trajectories)
            cap = new_s.uavs[0].energy_budget * (1.0 - ENERGY_MARGIN)
            if used > cap:
                return None
        caps = np.array([u.tx_power for u in new_s.uavs])
        p = np.minimum(prev_plan.powers.p, caps[:, None])
        return make_plan(new_s, prev_plan.trajectories, prev_plan.schedule,
                         PowerProfile(p=p))
    except (ValueError, TypeError):
        return None


def _point_label(param: str, index: int, value) -> str:
    tail = value if isinstance(value, str) else fmt(float(value))
    return f"point_{index:02d}_{param}_{tail}"


def _row_fields(s: Scenario, param: str) -> list[str]:
    return ([param, "r_com_bpshz"]
            + [f"r_{u.id}_bpshz" for u in s.users]
            + ["energy_used_j", "iterations", "wall_time_s", "status",
               "warm_started", "error"])


def _point_row(s: Scenario, param: str, value, report: SolveReport | None,
               error: str = "") -> dict:
    row = {param: value, "error": error}
    if report is None:
        row.update({"r_com_bpshz": "", "energy_used_j": "",
                    "iterations": "", "wall_time_s": "", "status": "failed",
                    "warm_started": ""})
        for u in s.users:
            row[f"r_{u.id}_bpshz"] = ""
        return row
    plan: Plan = report.plan
    energy = ""
    if (s.energy.kind != "none"
            and all(t.fidelity == FULL_KINEMATIC for t in plan.trajectories)):
        energy = sum(trajectory_energy(t, s.grid, s.energy)
                     for t in plan.trajectories)
    row.update({
        "r_com_bpshz": report.objective,
        "energy_used_j": energy,
        "iterations": report.iterations,
        "wall_time_s": report.wall_time_s,
        "status": report.status,
        "warm_started": report.warm_started,
    })
    for u, r in zip(s.users, plan.per_user_throughput):
        row[f"r_{u.id}_bpshz"] = float(r)
    return row


def _solve_sweep_point(payload: tuple) -> dict:
    """One sweep point, cold-started; runs in worker processes."""
    (text, problem, param, value, power_control, tol_monotone, max_iters,
     point_dir) = payload
    s = _derive_scenario(load_scenario(text), param, value)
    problems = validate_scenario(s)
    if problems:
        return _point_row(s, param, value, None,
                          error="; ".join(problems))
    mismatch = _problem_mismatch(s, problem)
    if mismatch:
        return _point_row(s, param, value, None, error=mismatch)
    pc = value == "on" if param == "power_control" else power_control
    config = BcdConfig(max_outer_iters=max_iters, tol_monotone=tol_monotone)
    try:
        report = _dispatch_solve(s, problem, pc, config)
    except (BcdFailure, InfeasibleBudgetError, ValueError) as e:
        _write_failure_report(point_dir, render_scenario(s), str(e), config)
        return _point_row(s, param, value, None, error=str(e))
    export_plan(point_dir, s, render_scenario(s), report, config)
    return _point_row(s, param, value, report)


def run_sweep(spec: SweepSpec, config: BcdConfig, workers: int = 1,
              cold_start: bool = False, power_control: bool = True) -> int:
    problems = spec.problems()
    if problems:
        return _fail(EXIT_INPUT, "; ".join(problems))
    try:
        base, base_text = _load_scenario_path(spec.scenario_path)
    except ScenarioFormatError as e:
        return _fail(EXIT_INPUT, str(e))
    mismatch = _problem_mismatch(base, spec.problem,
                                 assume_budget=spec.param == "energy_budget_j")
    if mismatch:
        return _fail(EXIT_INPUT, mismatch)

    os.makedirs(spec.out_dir, exist_ok=True)
    write_manifest(os.path.join(spec.out_dir, "manifest.json"), base_text,
                   tolerances=config.tolerances_dict(),
                   extra={"sweep_param": spec.param,
                          "values": list(spec.values),
                          "problem": spec.problem,
                          "cold_start": bool(cold_start or workers > 1)})

    fields = _row_fields(base, spec.param)
    csv_path = os.path.join(spec.out_dir, "sweep.csv")
    labels = [_point_label(spec.param, i, v)
              for i, v in enumerate(spec.values)]
    payloads = [(base_text, spec.problem, spec.param, v, power_control,
                 config.tol_monotone, config.max_outer_iters,
                 os.path.join(spec.out_dir, labels[i]))
                for i, v in enumerate(spec.values)]

    failed = False
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        fh.flush()

        def emit(row: dict):
            nonlocal failed
            if row["status"] == "failed":
                failed = True
            writer.writerow({k: _csv_cell(row.get(k, "")) for k in fields})
            fh.flush()

        if workers > 1:
            # parallel points are always cold-started so the results do not
            # depend on the pool size; rows still land in sweep order
            with concurrent.futures.ProcessPoolExecutor(workers) as pool:
                for row in pool.map(_solve_sweep_point, payloads):
                    emit(row)
        else:
            prev_plan: Plan | None = None
            prev_label: str | None = None
            for i, value in enumerate(spec.values):
                s = _derive_scenario(base, spec.param, value)
                errs = validate_scenario(s)
                if errs:
                    emit(_point_row(s, spec.param, value, None,
                                    error="; ".join(errs)))
                    prev_plan = None
                    continue
                mismatch = _problem_mismatch(s, spec.problem)
                if mismatch:
                    emit(_point_row(s, spec.param, value, None,
                                    error=mismatch))
                    prev_plan = None
                    continue
                pc = (value == "on" if spec.param == "power_control"
                      else power_control)
                initial = None
                source = None
                if not cold_start and prev_plan is not None:
                    initial = _warm_initial(s, prev_plan, spec.problem)
                    if initial is not None:
                        source = prev_label
                point_dir = os.path.join(spec.out_dir, labels[i])
                try:
                    report = _dispatch_solve(s, spec.problem, pc, config,
                                             initial=initial)
                except (BcdFailure, InfeasibleBudgetError, ValueError) as e:
                    _write_failure_report(point_dir, render_scenario(s),
                                          str(e), config)
                    emit(_point_row(s, spec.param, value, None,
                                    error=str(e)))
                    prev_plan = None
                    continue
                export_plan(point_dir, s, render_scenario(s), report, config,
                            warm_start_source=source)
                emit(_point_row(s, spec.param, value, report))
                prev_plan = report.plan
                prev_label = labels[i]

    return EXIT_PARTIAL if failed else EXIT_OK


def _csv_cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return fmt(v)
    return v


def run_sweep_args(args) -> int:
    if args.param == "power_control":
        values: tuple = tuple(tok.strip() for tok in args.values.split(","))
    else:
        try:
            values = tuple(float(tok) for tok in args.values.split(","))
        except ValueError:
            return _fail(EXIT_INPUT,
                         f"--values must be numbers, got {args.values!r}")
    spec = SweepSpec(scenario_path=args.scenario, param=args.param,
                     values=values, problem=args.problem, out_dir=args.out)
    return run_sweep(spec, _config_from_args(args), workers=args.workers,
                     cold_start=args.cold_start,
                     power_control=args.power_control == "on")


# --------------------------------------------------------------------------
# energy-curve

def run_energy_curve(args) -> int:
    if args.speed_step <= 0:
        return _fail(EXIT_INPUT, "--speed-step must be positive")
    if args.speed_max < args.speed_min:
        return _fail(EXIT_INPUT, "--speed-max must be >= --speed-min")
    count = int(round((args.speed_max - args.speed_min) / args.speed_step))
    speeds = args.speed_min + args.speed_step * np.arange(count + 1)
    speeds = speeds[speeds <= args.speed_max + 1e-9]
    if args.model == FIXED_WING:
        params = EnergyModelParams(kind=FIXED_WING, c1=args.c1, c2=args.c2)
    else:
        params = EnergyModelParams(
            kind=ROTARY_WING,
            blade_profile_power=args.blade_profile_power,
            induced_power=args.induced_power,
            tip_speed=args.tip_speed,
            rotor_induced_velocity=args.rotor_induced_velocity,
            parasite_coeff=args.parasite_coeff)
    try:
        powers = propulsion_power(speeds, params)
    except EnergyDomainError as e:
        return _fail(EXIT_INPUT, str(e))
    lines = ["speed_mps,power_w"]
    lines += [f"{fmt(v)},{fmt(p)}" for v, p in zip(speeds, powers)]
    text = "\n".join(lines) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        out_parent = os.path.dirname(os.path.abspath(args.out))
        os.makedirs(out_parent, exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# oracle

def _parse_bounds(text: str):
    try:
        xs, ys = text.split(",")
        x0, x1 = (float(t) for t in xs.split(":"))
        y0, y1 = (float(t) for t in ys.split(":"))
    except ValueError:
        raise ScenarioFormatError(
            f"--bounds must look like x0:x1,y0:y1 (got {text!r})") from None
    return ((x0, x1), (y0, y1))


def run_oracle(args) -> int:
    try:
        s, text = _load_scenario_path(args.scenario)
    except ScenarioFormatError as e:
        return _fail(EXIT_INPUT, str(e))
    if s.n_uavs != 1:
        return _fail(EXIT_INPUT, "the trajectory oracle is single-UAV only")
    if args.bounds is not None:
        try:
            bounds = _parse_bounds(args.bounds)
        except ScenarioFormatError as e:
            return _fail(EXIT_INPUT, str(e))
    else:
        w = np.array([u.position for u in s.users], dtype=float)
        bounds = ((float(w[:, 0].min()), float(w[:, 0].max())),
                  (float(w[:, 1].min()), float(w[:, 1].max())))
    t0 = time.perf_counter()
    try:
        grid = GridSpec(bounds=bounds, step=args.step,
                        slot_count=s.grid.slot_count,
                        restrict_to_segment=args.segment)
        result = grid_search_trajectory(s, grid)
    except (InstanceTooLargeError, ValueError) as e:
        return _fail(EXIT_INPUT, str(e))
    wall = time.perf_counter() - t0
    plan = make_plan(s, (result.trajectory,), result.schedule,
                     full_power_profile(s))
    report = SolveReport(
        status="oracle", iterations=0,
        objective=result.common_throughput,
        objective_trace=[result.common_throughput],
        termination_reason="exhaustive grid enumeration",
        wall_time_s=wall, plan=plan)
    export_plan(args.out, s, text, report)
    dump_json({
        "candidates_evaluated": result.candidates_evaluated,
        "epsilon_grid": result.epsilon_grid,
        "step_m": args.step,
        "restrict_to_segment": bool(args.segment),
        "wall_time_s": wall,
    }, os.path.join(args.out, "oracle_meta.json"))
    print(f"oracle R_com = {fmt(result.common_throughput)} bps/Hz over "
          f"{result.candidates_evaluated} candidates "
          f"(epsilon_grid {fmt(result.epsilon_grid)})")
    return EXIT_OK


# --------------------------------------------------------------------------
# validate

def run_validate(args) -> int:
    try:
        s, _ = _load_scenario_path(args.scenario)
    except ScenarioFormatError as e:
        return _fail(EXIT_INPUT, str(e))
    print(f"{args.scenario}: OK ({s.n_users} users, {s.n_uavs} UAVs, "
          f"N={s.grid.slot_count}, T={fmt(s.grid.period)} s, "
          f"energy model {s.energy.kind})")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="uavtraj",
        description="UAV trajectory/communication co-design experiments")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol-monotone", type=float, default=1e-6,
                        help="BCD convergence threshold on objective gain")
    common.add_argument("--max-iters", type=int, default=100,
                        help="maximum BCD outer iterations")
    common.add_argument("--workers", type=int, default=1,
                        help="sweep worker processes (>1 forces cold starts)")
    common.add_argument("--seed", type=int, default=0,
                        help="reserved; all defaults are deterministic")

    sp = sub.add_parser("solve", parents=[common],
                        help="solve one scenario and export the plan")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--problem", choices=PROBLEMS, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--power-control", choices=("on", "off"), default="on",
                    help="iuic only: optimize transmit powers")
    sp.set_defaults(func=run_solve)

    sw = sub.add_parser("sweep", parents=[common],
                        help="sweep one parameter, one plan export per point")
    sw.add_argument("--scenario", required=True)
    sw.add_argument("--problem", choices=PROBLEMS, required=True)
    sw.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    sw.add_argument("--values", required=True,
                    help="comma-separated, strictly increasing for numbers")
    sw.add_argument("--out", required=True)
    sw.add_argument("--cold-start", action="store_true",
                    help="disable warm starts between sweep points")
    sw.add_argument("--power-control", choices=("on", "off"), default="on")
    sw.set_defaults(func=run_sweep_args)

    ec = sub.add_parser("energy-curve", parents=[common],
                        help="emit speed_mps,power_w CSV for a power model")
    ec.add_argument("--model", choices=(FIXED_WING, ROTARY_WING),
                    required=True)
    ec.add_argument("--out", required=True, help="CSV path, or - for stdout")
    ec.add_argument("--speed-min", type=float, default=0.0)
    ec.add_argument("--speed-max", type=float, default=50.0)
    ec.add_argument("--speed-step", type=float, default=1.0)
    ec.add_argument("--c1", type=float, default=FIXED_WING_C1)
    ec.add_argument("--c2", type=float, default=FIXED_WING_C2)
    ec.add_argument("--blade-profile-power", type=float,
                    default=ROTARY_DEFAULTS["blade_profile_power"])
    ec.add_argument("--induced-power", type=float,
                    default=ROTARY_DEFAULTS["induced_power"])
    ec.add_argument("--tip-speed", type=float,
                    default=ROTARY_DEFAULTS["tip_speed"])
    ec.add_argument("--rotor-induced-velocity", type=float,
                    default=ROTARY_DEFAULTS["rotor_induced_velocity"])
    ec.add_argument("--parasite-coeff", type=float,
                    default=ROTARY_DEFAULTS["parasite_coeff"])
    ec.set_defaults(func=run_energy_curve)

    orc = sub.add_parser("oracle", parents=[common],
                         help="grid-search trajectory oracle (tiny N only)")
    orc.add_argument("--scenario", required=True)
    orc.add_argument("--out", required=True)
    orc.add_argument("--step", type=float, required=True,
                     help="grid node spacing, m")
    orc.add_argument("--segment", action="store_true",
                     help="restrict nodes to the first-two-users segment")
    orc.add_argument("--bounds", default=None,
                     help="x0:x1,y0:y1 search box (default: user bbox)")
    orc.set_defaults(func=run_oracle)

    va = sub.add_parser("validate", parents=[common],
                        help="parse and validate a scenario file")
    va.add_argument("--scenario", required=True)
    va.set_defaults(func=run_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
