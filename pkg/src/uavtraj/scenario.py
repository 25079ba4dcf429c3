"""Problem description: users, UAVs, channel constants, time grid, energy model.

All quantities are stored internally in SI linear units (W, m, s, J).
Decibel values appear only at the config boundary, in field names that
carry an explicit unit suffix (``noise_power_dbm``, ``beta0_db``).

Config files are YAML documents with five sections: ``users``, ``uavs``,
``channel``, ``grid``, ``energy``.  The channel section accepts either the
dB form (``beta0_db``, ``noise_power_dbm``) or the linear form
(``beta0_linear``, ``noise_power_w``), but not both; the canonical render
emits the linear form so that load(render(s)) round-trips exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import yaml

FIXED_WING = "fixed-wing"
ROTARY_WING = "rotary-wing"
NO_ENERGY_MODEL = "none"

DEFAULT_SLOT_COUNT = 200


class ScenarioFormatError(ValueError):
    """Config text that does not parse or violates the schema."""


def db_to_linear(value_db: float) -> float:
    """Convert a dB value to a linear power ratio: 10^(dB/10)."""
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)


def dbm_to_watts(value_dbm: float) -> float:
    """Convert dBm to watts: -110 dBm -> 1e-14 W."""
    return 10.0 ** (value_dbm / 10.0) * 1e-3


def watts_to_dbm(value_w: float) -> float:
    return 10.0 * math.log10(value_w * 1e3)


@dataclass(frozen=True)
class UserSpec:
    """A quasi-stationary ground user at a nominal 2D location (meters)."""

    id: str
    position: tuple[float, float]


@dataclass(frozen=True)
class UavSpec:
    """A UAV aerial base station flying at constant altitude."""

    id: str
    altitude: float            # m
    v_max: float               # m/s
    tx_power: float            # W (cap; pinned in the no-power-control problems)
    v_min: float = 0.0         # m/s (0 allowed for rotary-wing)
    a_max: float = math.inf    # m/s^2
    energy_budget: float | None = None  # J


@dataclass(frozen=True)
class ChannelParams:
    """LoS channel constants: reference gain at 1 m and receiver noise power."""

    beta0: float        # linear power gain at 1 m reference distance
    noise_power: float  # W


@dataclass(frozen=True)
class TimeGrid:
    """Flight period discretized into equal-length slots."""

    period: float     # s
    slot_count: int   # N

    @property
    def slot_len(self) -> float:
        """Slot duration in seconds; derived, never stored independently."""
        return self.period / self.slot_count


@dataclass(frozen=True)
class EnergyModelParams:
    """Propulsion power model parameters.

    Fixed-wing: P(v) = c1*v^3 + c2/v.  Rotary-wing: blade profile +
    induced + parasite terms; finite at v = 0.
    """

    kind: str = NO_ENERGY_MODEL
    c1: float | None = None              # kg/m
    c2: float | None = None              # kg*m^3/s^4
    blade_profile_power: float | None = None      # W (P0)
    induced_power: float | None = None            # W (P_i)
    tip_speed: float | None = None                # m/s (U_tip)
    rotor_induced_velocity: float | None = None   # m/s (v0)
    parasite_coeff: float | None = None           # W*s^3/m^3, multiplies v^3


@dataclass(frozen=True)
class Scenario:
    """Immutable problem description; safe to share across workers."""

    users: tuple[UserSpec, ...]
    uavs: tuple[UavSpec, ...]
    channel: ChannelParams
    grid: TimeGrid
    energy: EnergyModelParams = field(default_factory=EnergyModelParams)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_uavs(self) -> int:
        return len(self.uavs)


# --------------------------------------------------------------------------
# Validation

def _finite(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def validate_scenario(s: Scenario) -> list[str]:
    """Enumerate every violated invariant with the offending field path.

    Returns an empty list exactly when the scenario is valid.
    """
    out: list[str] = []
    if len(s.users) < 1:
        out.append("users must contain at least one user")
    seen: dict[str, int] = {}
    for i, u in enumerate(s.users):
        if not (_finite(u.position[0]) and _finite(u.position[1])):
            out.append(f"users[{i}].position must be finite")
        if u.id in seen:
            out.append(f"users[{i}].id duplicates users[{seen[u.id]}].id ({u.id!r})")
        else:
            seen[u.id] = i
    if len(s.uavs) < 1:
        out.append("uavs must contain at least one uav")
    seen = {}
    for i, u in enumerate(s.uavs):
        if u.id in seen:
            out.append(f"uavs[{i}].id duplicates uavs[{seen[u.id]}].id ({u.id!r})")
        else:
            seen[u.id] = i
        if not (u.altitude > 0):
            out.append(f"uavs[{i}].altitude must be > 0")
        if not (u.v_min >= 0):
            out.append(f"uavs[{i}].v_min must be >= 0")
        if not (u.v_min <= u.v_max):
            out.append(f"uavs[{i}].v_min must be <= uavs[{i}].v_max "
                       f"(got v_min={u.v_min}, v_max={u.v_max})")
        if not (u.a_max >= 0):
            out.append(f"uavs[{i}].a_max must be >= 0")
        if not (u.tx_power > 0):
            out.append(f"uavs[{i}].tx_power must be > 0")
        if u.energy_budget is not None and not (u.energy_budget > 0):
            out.append(f"uavs[{i}].energy_budget must be > 0")
    if not (s.channel.beta0 > 0):
        out.append("channel.beta0 must be > 0")
    if not (s.channel.noise_power > 0):
        out.append("channel.noise_power must be > 0")
    if not (s.grid.period > 0):
        out.append("grid.period must be > 0")
    if s.grid.slot_count < 2:
        out.append("grid.slot_count must be >= 2")
    out.extend(_validate_energy(s.energy))
    return out


def _validate_energy(e: EnergyModelParams) -> list[str]:
    out: list[str] = []
    if e.kind not in (FIXED_WING, ROTARY_WING, NO_ENERGY_MODEL):
        out.append(f"energy.kind must be one of {FIXED_WING!r}, {ROTARY_WING!r}, "
                   f"{NO_ENERGY_MODEL!r} (got {e.kind!r})")
        return out
    required = {
        FIXED_WING: ("c1", "c2"),
        ROTARY_WING: ("blade_profile_power", "induced_power", "tip_speed",
                      "rotor_induced_velocity", "parasite_coeff"),
        NO_ENERGY_MODEL: (),
    }[e.kind]
    for name in required:
        v = getattr(e, name)
        if v is None:
            out.append(f"energy.{name} is required for kind {e.kind!r}")
        elif not (v > 0):
            out.append(f"energy.{name} must be > 0")
    return out


# --------------------------------------------------------------------------
# Config parsing

_USER_KEYS = {"id", "x_m", "y_m"}
_UAV_KEYS = {"id", "altitude_m", "v_max_mps", "v_min_mps", "a_max_mps2",
             "tx_power_w", "energy_budget_j"}
_CHANNEL_KEYS = {"beta0_db", "beta0_linear", "noise_power_dbm", "noise_power_w"}
_GRID_KEYS = {"period_s", "slot_count"}
_ENERGY_KEYS = {"kind", "c1_kg_per_m", "c2_kg_m3_per_s4",
                "blade_profile_power_w", "induced_power_w", "tip_speed_mps",
                "rotor_induced_velocity_mps", "parasite_coeff_w_s3_per_m3"}
_SECTIONS = {"users", "uavs", "channel", "grid", "energy"}


def _require_map(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ScenarioFormatError(f"{path} must be a mapping")
    return obj


def _check_keys(d: dict, allowed: set[str], path: str) -> None:
    for k in d:
        if k not in allowed:
            raise ScenarioFormatError(f"unknown key {k!r} in {path}")


def _get_num(d: dict, key: str, path: str, required: bool = True,
             default: float | None = None) -> float | None:
    if key not in d:
        if required:
            raise ScenarioFormatError(f"{path} missing required field {key!r}")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioFormatError(f"{path}.{key} must be a number (got {v!r})")
    return float(v)


def _get_str(d: dict, key: str, path: str) -> str:
    if key not in d:
        raise ScenarioFormatError(f"{path} missing required field {key!r}")
    v = d[key]
    if not isinstance(v, str):
        raise ScenarioFormatError(f"{path}.{key} must be a string (got {v!r})")
    return v


def _parse_channel(d: dict) -> ChannelParams:
    _check_keys(d, _CHANNEL_KEYS, "channel")
    if ("beta0_db" in d) == ("beta0_linear" in d):
        raise ScenarioFormatError(
            "channel requires exactly one of 'beta0_db' or 'beta0_linear'")
    if ("noise_power_dbm" in d) == ("noise_power_w" in d):
        raise ScenarioFormatError(
            "channel requires exactly one of 'noise_power_dbm' or 'noise_power_w'")
    if "beta0_db" in d:
        beta0 = db_to_linear(_get_num(d, "beta0_db", "channel"))
    else:
        beta0 = _get_num(d, "beta0_linear", "channel")
    if "noise_power_dbm" in d:
        noise = dbm_to_watts(_get_num(d, "noise_power_dbm", "channel"))
    else:
        noise = _get_num(d, "noise_power_w", "channel")
    return ChannelParams(beta0=beta0, noise_power=noise)


def _parse_energy(d: dict | None) -> EnergyModelParams:
    if d is None:
        return EnergyModelParams()
    _check_keys(d, _ENERGY_KEYS, "energy")
    kind = _get_str(d, "kind", "energy")
    return EnergyModelParams(
        kind=kind,
        c1=_get_num(d, "c1_kg_per_m", "energy", required=False),
        c2=_get_num(d, "c2_kg_m3_per_s4", "energy", required=False),
        blade_profile_power=_get_num(d, "blade_profile_power_w", "energy", required=False),
        induced_power=_get_num(d, "induced_power_w", "energy", required=False),
        tip_speed=_get_num(d, "tip_speed_mps", "energy", required=False),
        rotor_induced_velocity=_get_num(d, "rotor_induced_velocity_mps", "energy",
                                        required=False),
        parasite_coeff=_get_num(d, "parasite_coeff_w_s3_per_m3", "energy",
                                required=False),
    )


def load_scenario(config_text: str) -> Scenario:
    """Parse a YAML scenario document and return a validated Scenario.

    Raises ScenarioFormatError on malformed text, unknown keys, missing
    required fields, or violated invariants.
    """
    try:
        doc = yaml.safe_load(config_text)
    except yaml.YAMLError as e:
        raise ScenarioFormatError(f"config does not parse as YAML: {e}") from e
    doc = _require_map(doc, "document")
    _check_keys(doc, _SECTIONS, "document")
    for section in ("users", "uavs", "channel", "grid"):
        if section not in doc:
            raise ScenarioFormatError(f"document missing required section {section!r}")

    raw_users = doc["users"]
    if not isinstance(raw_users, list) or not raw_users:
        raise ScenarioFormatError("users must be a non-empty list")
    users = []
    for i, entry in enumerate(raw_users):
        path = f"users[{i}]"
        entry = _require_map(entry, path)
        _check_keys(entry, _USER_KEYS, path)
        users.append(UserSpec(
            id=_get_str(entry, "id", path),
            position=(_get_num(entry, "x_m", path), _get_num(entry, "y_m", path)),
        ))

    raw_uavs = doc["uavs"]
    if not isinstance(raw_uavs, list) or not raw_uavs:
        raise ScenarioFormatError("uavs must be a non-empty list")
    uavs = []
    for i, entry in enumerate(raw_uavs):
        path = f"uavs[{i}]"
        entry = _require_map(entry, path)
        _check_keys(entry, _UAV_KEYS, path)
        uavs.append(UavSpec(
            id=_get_str(entry, "id", path),
            altitude=_get_num(entry, "altitude_m", path),
            v_max=_get_num(entry, "v_max_mps", path),
            tx_power=_get_num(entry, "tx_power_w", path),
            v_min=_get_num(entry, "v_min_mps", path, required=False, default=0.0),
            a_max=_get_num(entry, "a_max_mps2", path, required=False, default=math.inf),
            energy_budget=_get_num(entry, "energy_budget_j", path, required=False),
        ))

    grid_d = _require_map(doc["grid"], "grid")
    _check_keys(grid_d, _GRID_KEYS, "grid")
    period = _get_num(grid_d, "period_s", "grid")
    slot_count = grid_d.get("slot_count", DEFAULT_SLOT_COUNT)
    if isinstance(slot_count, bool) or not isinstance(slot_count, int):
        raise ScenarioFormatError(f"grid.slot_count must be an integer "
                                  f"(got {slot_count!r})")

    scenario = Scenario(
        users=tuple(users),
        uavs=tuple(uavs),
        channel=_parse_channel(_require_map(doc["channel"], "channel")),
        grid=TimeGrid(period=period, slot_count=slot_count),
        energy=_parse_energy(_require_map(doc["energy"], "energy")
                             if "energy" in doc else None),
    )
    violations = validate_scenario(scenario)
    if violations:
        raise ScenarioFormatError("invalid scenario: " + "; ".join(violations))
    return scenario


def load_scenario_file(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())


# --------------------------------------------------------------------------
# Canonical rendering

def _yaml_num(x: float) -> str:
    """Format a float so PyYAML reads it back as the identical float.

    YAML 1.1 requires a '.' in scientific-notation floats; repr() of e.g.
    1e-14 omits it.
    """
    if isinstance(x, int):
        return repr(x)
    if math.isinf(x):
        return ".inf" if x > 0 else "-.inf"
    s = repr(float(x))
    if "e" in s and "." not in s:
        mantissa, exp = s.split("e")
        s = f"{mantissa}.0e{exp}"
    return s


def render_scenario(s: Scenario) -> str:
    """Emit the canonical YAML form of a scenario.

    load_scenario(render_scenario(s)) == s for every valid scenario; the
    canonical form uses the linear channel fields to avoid dB round-off.
    """
    lines = ["users:"]
    for u in s.users:
        lines.append(f"- id: {u.id}")
        lines.append(f"  x_m: {_yaml_num(u.position[0])}")
        lines.append(f"  y_m: {_yaml_num(u.position[1])}")
    lines.append("uavs:")
    for u in s.uavs:
        lines.append(f"- id: {u.id}")
        lines.append(f"  altitude_m: {_yaml_num(u.altitude)}")
        lines.append(f"  v_max_mps: {_yaml_num(u.v_max)}")
        lines.append(f"  v_min_mps: {_yaml_num(u.v_min)}")
        lines.append(f"  a_max_mps2: {_yaml_num(u.a_max)}")
        lines.append(f"  tx_power_w: {_yaml_num(u.tx_power)}")
        if u.energy_budget is not None:
            lines.append(f"  energy_budget_j: {_yaml_num(u.energy_budget)}")
    lines.append("channel:")
    lines.append(f"  beta0_linear: {_yaml_num(s.channel.beta0)}")
    lines.append(f"  noise_power_w: {_yaml_num(s.channel.noise_power)}")
    lines.append("grid:")
    lines.append(f"  period_s: {_yaml_num(s.grid.period)}")
    lines.append(f"  slot_count: {s.grid.slot_count}")
    lines.append("energy:")
    lines.append(f"  kind: {s.energy.kind}")
    field_map = [
        ("c1", "c1_kg_per_m"),
        ("c2", "c2_kg_m3_per_s4"),
        ("blade_profile_power", "blade_profile_power_w"),
        ("induced_power", "induced_power_w"),
        ("tip_speed", "tip_speed_mps"),
        ("rotor_induced_velocity", "rotor_induced_velocity_mps"),
        ("parasite_coeff", "parasite_coeff_w_s3_per_m3"),
    ]
    for attr, key in field_map:
        v = getattr(s.energy, attr)
        if v is not None:
            lines.append(f"  {key}: {_yaml_num(v)}")
    return "\n".join(lines) + "\n"
