"""UAV aerial-base-station trajectory/communication co-design toolkit.

Three joint designs over a periodic slotted horizon: the single-UAV
throughput/delay tradeoff, multi-UAV interference coordination with
optional power control, and the energy-constrained fixed-wing problem.
All are solved by block coordinate descent over exact scheduling LPs and
successive convex approximation steps with certified surrogate bounds.
"""

from .artifacts import fmt, load_results_csv, write_results_csv
from .bcd import BcdConfig, BcdFailure, SolveReport, bcd_solve
from .channel import (InvariantViolation, PowerProfile, Schedule,
                      common_throughput, full_power_profile, gain_tensor,
                      link_rate, los_gain, per_slot_rates, sinr_rate,
                      uniform_schedule)
from .energy import (CharacteristicSpeeds, EnergyDomainError,
                     characteristic_speeds, fixed_wing_power,
                     propulsion_power, rotary_wing_power, trajectory_energy)
from .kinematics import (FULL_KINEMATIC, WAYPOINT_ONLY, InfeasibleSpeedError,
                         ResidualReport, Trajectory,
                         circular_initial_trajectory, cluster_users,
                         full_trajectory_from_velocities, kinematic_residuals,
                         max_feasible_circle_speed, speed_profile)
from .oracle import (GridSpec, InstanceTooLargeError, OracleResult,
                     best_constant_speed_circle, brute_force_schedule,
                     epsilon_grid, grid_search_trajectory)
from .planners import (InfeasibleBudgetError, Plan, export_plan,
                       longest_service_gaps, make_plan,
                       max_min_schedule_from_rates, plan_energy_constrained,
                       plan_multi_uav_iuic, plan_single_uav_delay,
                       schedule_lp, static_baseline, travel_free_upper_bound)
from .scenario import (ChannelParams, EnergyModelParams, Scenario,
                       ScenarioFormatError, TimeGrid, UavSpec, UserSpec,
                       load_scenario, load_scenario_file, render_scenario,
                       validate_scenario)
from .surrogates import (NormSqTangent, SurrogateRate, log_affine_tangent,
                         norm_sq_tangent, rate_surrogate,
                         rate_surrogate_arrays, total_signal_log_tangent)

__version__ = "0.1.0"
