"""Seeded household load simulation producing cumulative meter readings.

A simulation run walks a persona through ``n_days`` civil days in the
meter's timezone.  Each day draws a routine template, schedules appliance
activations against it, sums per-slot mean power, and integrates energy
into the cumulative register with meter quantization: the register shows
whole 0.001-kWh counts and the truncation remainder carries over, so
long-run energy is conserved to within one count.

Determinism: every stochastic choice is driven by a per-day generator
derived from (seed, day index), so a fixed (persona, period, scripts,
seed) tuple reproduces the identical output, and scripting one day leaves
every other day untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import date, datetime, time, timedelta, timezone
from decimal import Decimal
from typing import Mapping, Sequence
from zoneinfo import ZoneInfo

import numpy as np

from .personas import (
    MODE_BURST,
    MODE_CONTINUOUS,
    MODE_STANDBY,
    OVEN_W,
    SLOTS_PER_DAY,
    AppliancePattern,
    HouseholdPersona,
)
from .protocol import (
    POSITIVE_ACTIVE_ENERGY,
    REGISTER_MODULUS_KWH,
    DataLine,
    ReadoutFrame,
    Unit,
    encode_readout,
    format_register_kwh,
)
from .store import MeterReading

DEFAULT_TIMEZONE = "Europe/Warsaw"

KIND_ABSENCE_MORNING = "absence-morning"
KIND_SHIFTED_MORNING = "shifted-morning"
KIND_EVENING_BAKING = "evening-baking"
KIND_FULL_ABSENCE = "full-absence"
ANOMALY_KINDS = (
    KIND_ABSENCE_MORNING,
    KIND_SHIFTED_MORNING,
    KIND_EVENING_BAKING,
    KIND_FULL_ABSENCE,
)

_REGISTER_MODULUS_WH = int(REGISTER_MODULUS_KWH) * 1000
_UWH_PER_WH = 1_000_000

# An appliance activates only where its routine concentrates at least
# average activity; below this density the window stays quiet that day.
_DENSITY_GATE = 1.0


@dataclass(frozen=True)
class AnomalyScript:
    """A scripted irregularity on one simulated day."""

    kind: str
    day: date
    parameters: Mapping[str, float] | None = None

    def __post_init__(self):
        if self.kind not in ANOMALY_KINDS:
            raise ValueError(
                "unknown anomaly kind {!r}; valid kinds: {}".format(
                    self.kind, ", ".join(ANOMALY_KINDS)
                )
            )

    def param(self, name: str, default: float) -> float:
        if self.parameters and name in self.parameters:
            return float(self.parameters[name])
        return default


@dataclass(eq=False)
class SimOutput:
    """Readings plus per-day ground truth of one simulation run."""

    meter_id: str
    readings: tuple[MeterReading, ...]
    truth_labels: dict[date, str]
    slot_powers_w: np.ndarray  # shape (n_days, 96), the pre-quantization truth

    @property
    def days(self) -> list[date]:
        return sorted(self.truth_labels)


@dataclass(frozen=True)
class _Activation:
    appliance: AppliancePattern
    start_slot: int

    @property
    def end_slot(self) -> int:
        return self.start_slot + self.appliance.duration_slots

    def overlaps(self, lo: int, hi: int) -> bool:
        return self.start_slot < hi and self.end_slot > lo


def _window_density(weights: Sequence[float], start: int, end: int) -> float:
    inside = sum(weights[start:end]) / (end - start)
    overall = sum(weights) / len(weights)
    return inside / overall


def _argmax_slot(weights: Sequence[float], start: int, end: int) -> int:
    best, best_w = start, weights[start]
    for slot in range(start + 1, end):
        if weights[slot] > best_w:
            best, best_w = slot, weights[slot]
    return best


def _day_activations(
    persona: HouseholdPersona, weights: Sequence[float], weekday: int, rng: np.random.Generator
) -> list[_Activation]:
    activations = []
    for appliance in persona.appliances:
        if appliance.mode != MODE_BURST:
            continue
        for window in appliance.schedule:
            draw = rng.random()  # always consumed, keeps the stream stable
            if weekday not in window.days:
                continue
            density = _window_density(weights, window.start_slot, window.end_slot)
            probability = window.probability if density >= _DENSITY_GATE else 0.0
            if draw >= probability:
                continue
            last_start = window.end_slot - appliance.duration_slots
            start = _argmax_slot(weights, window.start_slot, last_start + 1)
            if appliance.placement_jitter:
                j = appliance.placement_jitter
                start += int(rng.integers(-j, j + 1))
                start = min(max(start, window.start_slot), last_start)
            activations.append(_Activation(appliance, start))
    return activations


def _apply_script(
    script: AnomalyScript, activations: list[_Activation], persona: HouseholdPersona
) -> list[_Activation]:
    if script.kind == KIND_FULL_ABSENCE:
        return []
    if script.kind == KIND_ABSENCE_MORNING:
        lo = int(script.param("start_slot", 28))
        hi = int(script.param("end_slot", 48))
        return [a for a in activations if not a.overlaps(lo, hi)]
    if script.kind == KIND_SHIFTED_MORNING:
        lo = int(script.param("window_start", 28))
        hi = int(script.param("window_end", 40))
        shift = int(script.param("shift_slots", 12))
        shifted = []
        for a in activations:
            if a.overlaps(lo, hi):
                start = min(a.start_slot + shift, SLOTS_PER_DAY - a.appliance.duration_slots)
                shifted.append(_Activation(a.appliance, start))
            else:
                shifted.append(a)
        return shifted
    if script.kind == KIND_EVENING_BAKING:
        start = int(script.param("start_slot", 72))
        duration = int(script.param("duration_slots", 8))
        oven = persona.appliance("oven")
        if oven is None:
            oven = AppliancePattern("oven", OVEN_W, MODE_BURST, duty=0.75)
        bake = replace(oven, schedule=(), duration_slots=duration, cycle=None)
        start = min(start, SLOTS_PER_DAY - duration)
        extra = [_Activation(bake, start)]
        dishwasher = persona.appliance("dishwasher")
        if dishwasher is not None and script.param("with_dishwasher", 1.0):
            dw_start = min(start + duration, SLOTS_PER_DAY - dishwasher.duration_slots)
            extra.append(_Activation(replace(dishwasher, schedule=()), dw_start))
        return activations + extra
    raise AssertionError("unreachable: validated in AnomalyScript")


def _day_slot_powers(
    persona: HouseholdPersona,
    weights: Sequence[float],
    weekday: int,
    rng: np.random.Generator,
    script: AnomalyScript | None,
) -> np.ndarray:
    powers = np.zeros(SLOTS_PER_DAY)
    if persona.ambient_noise_w > 0.0:
        powers += rng.normal(0.0, persona.ambient_noise_w, SLOTS_PER_DAY)
    for appliance in persona.appliances:
        if appliance.mode == MODE_STANDBY:
            powers += appliance.power_w
        elif appliance.mode == MODE_CONTINUOUS:
            duty = appliance.duty * (1.0 + rng.normal(0.0, appliance.duty_jitter, SLOTS_PER_DAY))
            powers += appliance.power_w * np.clip(duty, 0.0, 1.0)
    activations = _day_activations(persona, weights, weekday, rng)
    if script is not None:
        activations = _apply_script(script, activations, persona)
    for act in activations:
        appliance = act.appliance
        for offset in range(appliance.duration_slots):
            slot = act.start_slot + offset
            if slot >= SLOTS_PER_DAY:
                break
            mult = appliance.cycle[offset] if appliance.cycle is not None else 1.0
            level = appliance.power_w * appliance.duty * mult
            if appliance.power_noise:
                level *= max(0.0, 1.0 + rng.normal(0.0, appliance.power_noise))
            powers[slot] += level
    return np.maximum(powers, 0.0)


def _pick_template(persona: HouseholdPersona, rng: np.random.Generator) -> int:
    u = rng.random()
    acc = 0.0
    for index, w in enumerate(persona.template_weights):
        acc += w
        if u < acc:
            return index
    return len(persona.template_weights) - 1


def _base_template(persona: HouseholdPersona) -> int:
    best = 0
    for index, w in enumerate(persona.template_weights):
        if w > persona.template_weights[best]:
            best = index
    return best


def simulate_period(
    persona: HouseholdPersona,
    start: date,
    n_days: int,
    scripts: Sequence[AnomalyScript] = (),
    seed: int = 0,
    *,
    tz_name: str = DEFAULT_TIMEZONE,
    initial_register_kwh: Decimal = Decimal("0.000"),
) -> SimOutput:
    """Simulate ``n_days`` days of 15-minute cumulative readings.

    Emits ``96 * n_days + 1`` readings at exact 15-minute boundaries,
    starting at local midnight of ``start``.  Scripted days replace the
    random routine draw with the persona's most likely template before the
    script transformation, and are truth-labelled with the anomaly kind.

    Raises:
        ValueError: if ``n_days < 1``, a script day falls outside the
            period, or two scripts target the same day.
    """
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    last_day = start + timedelta(days=n_days - 1)
    by_day: dict[date, AnomalyScript] = {}
    for script in scripts:
        if not start <= script.day <= last_day:
            raise ValueError(
                "script day {} outside simulated period {}..{}".format(
                    script.day, start, last_day
                )
            )
        if script.day in by_day:
            raise ValueError("multiple scripts target {}".format(script.day))
        by_day[script.day] = script

    tz = ZoneInfo(tz_name)
    t0 = datetime.combine(start, time(0, 0), tzinfo=tz).astimezone(timezone.utc)
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF

    init_wh = int(initial_register_kwh * 1000)
    slot_powers = np.zeros((n_days, SLOTS_PER_DAY))
    truth: dict[date, str] = {}

    readings = [_reading(persona.id, t0, init_wh)]
    cumulative_uwh = 0
    ts = t0
    for day_index in range(n_days):
        day = start + timedelta(days=day_index)
        rng = np.random.default_rng([seed, day_index])
        script = by_day.get(day)
        if script is not None:
            template_index = _base_template(persona)
            truth[day] = script.kind
        else:
            template_index = _pick_template(persona, rng)
            truth[day] = persona.routine_templates[template_index].name
        weights = persona.routine_templates[template_index].weights
        powers = _day_slot_powers(persona, weights, day.weekday(), rng, script)
        slot_powers[day_index] = powers
        for slot in range(SLOTS_PER_DAY):
            cumulative_uwh += int(round(powers[slot] * 250_000))
            ts += timedelta(minutes=15)
            readings.append(
                _reading(persona.id, ts, init_wh + cumulative_uwh // _UWH_PER_WH)
            )
    return SimOutput(
        meter_id=persona.id,
        readings=tuple(readings),
        truth_labels=truth,
        slot_powers_w=slot_powers,
    )


def _reading(meter_id: str, ts: datetime, register_wh: int) -> MeterReading:
    value = (Decimal(register_wh % _REGISTER_MODULUS_WH) / 1000).quantize(Decimal("0.001"))
    return MeterReading(meter_id, ts, POSITIVE_ACTIVE_ENERGY, value)


def emit_frames(sim: SimOutput) -> list[tuple[datetime, ReadoutFrame]]:
    """Render each reading as a timestamped readout frame on register 1.8.0."""
    frames = []
    for reading in sim.readings:
        line = DataLine(
            POSITIVE_ACTIVE_ENERGY, format_register_kwh(reading.value_kwh), Unit.KWH
        )
        data = encode_readout([line])
        frames.append((reading.timestamp, ReadoutFrame((line,), data[-1])))
    return frames
