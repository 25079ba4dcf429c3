"""Shared fixtures: the reference two-user scenario and small variants."""

from __future__ import annotations

import math
from pathlib import Path

import pytest

from uavtraj.scenario import (ChannelParams, EnergyModelParams, Scenario,
                              TimeGrid, UavSpec, UserSpec)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def two_user_scenario(period: float = 100.0, slot_count: int = 200,
                      half_spacing: float = 1000.0,
                      energy_budget: float | None = None,
                      v_min: float = 0.0,
                      a_max: float = math.inf,
                      energy: EnergyModelParams | None = None) -> Scenario:
    """The reference geometry: two users on the x axis, one UAV at 100 m."""
    return Scenario(
        users=(UserSpec(id="gu1", position=(-half_spacing, 0.0)),
               UserSpec(id="gu2", position=(half_spacing, 0.0))),
        uavs=(UavSpec(id="uav1", altitude=100.0, v_max=50.0, tx_power=0.1,
                      v_min=v_min, a_max=a_max, energy_budget=energy_budget),),
        channel=ChannelParams(beta0=1e-5, noise_power=1e-14),
        grid=TimeGrid(period=period, slot_count=slot_count),
        energy=energy or EnergyModelParams(),
    )


FIXED_WING_ENERGY = EnergyModelParams(kind="fixed-wing", c1=9.26e-4, c2=2250.0)

ROTARY_ENERGY = EnergyModelParams(
    kind="rotary-wing", blade_profile_power=79.8563, induced_power=88.6279,
    tip_speed=120.0, rotor_induced_velocity=4.03, parasite_coeff=0.018485)


@pytest.fixture(scope="session")
def paper_p1() -> Scenario:
    return two_user_scenario()


@pytest.fixture(scope="session")
def tiny_p1() -> Scenario:
    """Same geometry on a coarse grid; cheap enough for solver tests."""
    return two_user_scenario(slot_count=8)


@pytest.fixture(scope="session")
def energy_scenario() -> Scenario:
    return two_user_scenario(period=120.0, slot_count=40, v_min=5.0,
                             a_max=5.0, energy_budget=13000.0,
                             energy=FIXED_WING_ENERGY)
