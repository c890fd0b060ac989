from __future__ import annotations

from datetime import date

import pytest

from meterwatch.profiles import build_daily_profiles
from meterwatch.protocol import POSITIVE_ACTIVE_ENERGY
from meterwatch.simulator import SimOutput, simulate_period
from meterwatch.store import TelemetryStore

START = date(2024, 6, 3)


def profiles_through_store(sim: SimOutput, min_completeness: float = 0.9):
    """Run a simulation's readings through ingest -> power -> profiles."""
    store = TelemetryStore()
    store.ingest(sim.readings)
    span = store.span(sim.meter_id, POSITIVE_ACTIVE_ENERGY)
    samples = store.mean_power_series(sim.meter_id, POSITIVE_ACTIVE_ENERGY, *span)
    profiles, excluded = build_daily_profiles(samples, min_completeness)
    return profiles, excluded, store


@pytest.fixture(scope="session")
def s1_month():
    from meterwatch.personas import build_persona

    return simulate_period(build_persona("S1"), START, 30, seed=11)


@pytest.fixture(scope="session")
def s4_month():
    from meterwatch.personas import build_persona

    return simulate_period(build_persona("S4"), START, 30, seed=11)


@pytest.fixture(scope="session")
def s4_profiles(s4_month):
    profiles, _, _ = profiles_through_store(s4_month)
    return profiles
