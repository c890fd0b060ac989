"""Telemetry store: reading ingestion, grid alignment, mean-power series.

Readings are keyed by (meter_id, register, timestamp); ingestion is
idempotent and validates register monotonicity (allowing the rollover at
the display modulus) before committing anything, so the final store state
does not depend on arrival order.  Persistence is an append-only
newline-delimited JSON file with the whole index held in memory.

Power derivation: cumulative readings are snapped or interpolated onto
the 15-minute grid, then each slot's mean power is the energy delta
between consecutive grid values divided by the slot length
(``(E2 - E1) * 4 * 1000`` watts).
"""

from __future__ import annotations

import csv
import json
import threading
from bisect import bisect_left
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from decimal import Decimal, InvalidOperation, ROUND_HALF_EVEN
from pathlib import Path
from typing import Iterable, Sequence, TextIO

from .protocol import ObisCode, REGISTER_MODULUS_KWH

QUALITY_MEASURED = "measured"
QUALITY_INTERPOLATED = "interpolated"
QUALITY_MISSING = "missing"

SLOT = timedelta(minutes=15)
SNAP_TOLERANCE = timedelta(seconds=90)
MAX_INTERPOLATION_GAP = timedelta(hours=1)

# A register drop counts as display rollover only when the old value sits
# near the top of the range and the new one near the bottom.
_ROLLOVER_HIGH = REGISTER_MODULUS_KWH * Decimal("0.9")
_ROLLOVER_LOW = REGISTER_MODULUS_KWH * Decimal("0.1")

CSV_HEADER = ["meter_id", "timestamp", "obis", "value_kwh"]


class StoreError(Exception):
    pass


class ConflictingDuplicate(StoreError):
    """Same (meter, register, timestamp) key ingested with another value."""


class NonMonotonicRegister(StoreError):
    """Register decreased without a plausible rollover."""


class ReadingsCsvError(StoreError):
    """A readings CSV file violates the expected format."""

    def __init__(self, line_number: int, reason: str):
        super().__init__("line {}: {}".format(line_number, reason))
        self.line_number = line_number
        self.reason = reason


@dataclass(frozen=True)
class MeterReading:
    meter_id: str
    timestamp: datetime
    register: ObisCode
    value_kwh: Decimal

    def __post_init__(self):
        if self.timestamp.tzinfo is None:
            raise ValueError("reading timestamps must be timezone-aware")
        if self.value_kwh < 0:
            raise ValueError("register values are non-negative")


@dataclass(frozen=True)
class GridReading:
    """A register value placed on a 15-minute boundary."""

    slot_start: datetime
    value_kwh: Decimal | None
    quality: str


@dataclass(frozen=True)
class PowerSample:
    meter_id: str
    slot_start: datetime
    mean_power_w: float | None
    quality: str


@dataclass
class StoreStats:
    readings_accepted: int = 0
    duplicates_dropped: int = 0
    out_of_order: int = 0
    rollovers_detected: int = 0

    def add(self, other: "StoreStats") -> None:
        self.readings_accepted += other.readings_accepted
        self.duplicates_dropped += other.duplicates_dropped
        self.out_of_order += other.out_of_order
        self.rollovers_detected += other.rollovers_detected

    def to_json_dict(self) -> dict:
        return {
            "readings_accepted": self.readings_accepted,
            "duplicates_dropped": self.duplicates_dropped,
            "out_of_order": self.out_of_order,
            "rollovers_detected": self.rollovers_detected,
        }


def is_rollover(old: Decimal, new: Decimal) -> bool:
    return new < old and old > _ROLLOVER_HIGH and new < _ROLLOVER_LOW


def register_delta_kwh(old: Decimal, new: Decimal) -> Decimal:
    """Energy between two register values, unwrapping the display rollover."""
    if new >= old:
        return new - old
    return new - old + REGISTER_MODULUS_KWH


class TelemetryStore:
    """Single-writer reading store with an in-memory index.

    When constructed with a path, accepted readings are appended to that
    newline-delimited JSON file and replayed on open.  Reads and writes are
    serialized through one lock; readers always observe the state left by
    the last completed ingest.
    """

    def __init__(self, path: str | Path | None = None):
        self._series: dict[tuple[str, str], dict[datetime, Decimal]] = {}
        self._lock = threading.RLock()
        self._path = Path(path) if path is not None else None
        self.stats = StoreStats()
        if self._path is not None and self._path.exists():
            self._replay(self._path)

    def _replay(self, path: Path) -> None:
        readings = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    readings.append(reading_from_record(json.loads(line)))
        if readings:
            self._ingest_validated(readings, persist=False)

    # -- ingestion ----------------------------------------------------------

    def ingest(self, batch: Iterable[MeterReading]) -> StoreStats:
        """Validate and commit a batch atomically; returns the stats delta.

        Re-ingesting any batch is a no-op (identical duplicates are
        dropped).  Nothing is committed when any reading conflicts.

        Raises:
            ConflictingDuplicate: same key seen with a different value.
            NonMonotonicRegister: a register decrease that is not a
                rollover, checked against time-adjacent neighbours in the
                merged (stored + incoming) timeline.
        """
        with self._lock:
            return self._ingest_validated(list(batch), persist=True)

    def _ingest_validated(self, batch: Sequence[MeterReading], persist: bool) -> StoreStats:
        delta = StoreStats()
        fresh: dict[tuple[str, str], dict[datetime, Decimal]] = {}
        for reading in batch:
            key = (reading.meter_id, str(reading.register))
            ts = reading.timestamp.astimezone(timezone.utc)
            existing = self._series.get(key, {}).get(ts)
            pending = fresh.get(key, {}).get(ts)
            known = existing if existing is not None else pending
            if known is not None:
                if known == reading.value_kwh:
                    delta.duplicates_dropped += 1
                    continue
                raise ConflictingDuplicate(
                    "{} {} at {}: stored {} vs new {}".format(
                        key[0], key[1], ts.isoformat(), known, reading.value_kwh
                    )
                )
            fresh.setdefault(key, {})[ts] = reading.value_kwh

        for key, news in fresh.items():
            stored = self._series.get(key, {})
            merged = sorted(list(stored.items()) + list(news.items()))
            for (t1, v1), (t2, v2) in zip(merged, merged[1:]):
                if t1 not in news and t2 not in news:
                    continue  # pair already validated
                if v2 >= v1:
                    continue
                if is_rollover(v1, v2):
                    delta.rollovers_detected += 1
                    continue
                raise NonMonotonicRegister(
                    "{} {}: {} -> {} between {} and {}".format(
                        key[0], key[1], v1, v2, t1.isoformat(), t2.isoformat()
                    )
                )
            if stored:
                newest = max(stored)
                delta.out_of_order += sum(1 for t in news if t < newest)

        for key, news in fresh.items():
            series = self._series.setdefault(key, {})
            series.update(news)
            delta.readings_accepted += len(news)
        if persist and self._path is not None and delta.readings_accepted:
            with open(self._path, "a", encoding="utf-8") as fh:
                for key, news in sorted(fresh.items()):
                    meter_id, obis = key
                    for ts in sorted(news):
                        record = {
                            "meter_id": meter_id,
                            "timestamp": rfc3339(ts),
                            "obis": obis,
                            "value_kwh": str(news[ts]),
                        }
                        fh.write(json.dumps(record, sort_keys=True) + "\n")
        self.stats.add(delta)
        return delta

    # -- queries ------------------------------------------------------------

    def meters(self) -> list[str]:
        with self._lock:
            return sorted({meter for meter, _ in self._series})

    def registers(self, meter_id: str) -> list[ObisCode]:
        with self._lock:
            return sorted(
                ObisCode.parse(obis) for meter, obis in self._series if meter == meter_id
            )

    def readings(self, meter_id: str, register: ObisCode) -> list[MeterReading]:
        with self._lock:
            series = self._series.get((meter_id, str(register)), {})
            return [
                MeterReading(meter_id, ts, register, value)
                for ts, value in sorted(series.items())
            ]

    def span(self, meter_id: str, register: ObisCode) -> tuple[datetime, datetime] | None:
        with self._lock:
            series = self._series.get((meter_id, str(register)), {})
            if not series:
                return None
            return min(series), max(series)

    def snapshot(self) -> dict[tuple[str, str], dict[datetime, Decimal]]:
        """Deep copy of the index, for state-equality checks."""
        with self._lock:
            return {key: dict(series) for key, series in self._series.items()}

    # -- derivation ---------------------------------------------------------

    def align_to_grid(
        self, meter_id: str, register: ObisCode, start: datetime, end: datetime
    ) -> list[GridReading]:
        """Place readings onto each 15-minute boundary in [start, end].

        A reading within 90 s of a boundary snaps to it (nearest wins,
        earlier on ties).  Otherwise the boundary value is linearly
        interpolated when its two enclosing readings are at most one hour
        apart; boundaries without such neighbours are marked missing.
        """
        with self._lock:
            series = self._series.get((meter_id, str(register)), {})
            times = sorted(series)
            values = [series[t] for t in times]
        grid: list[GridReading] = []
        boundary = _ceil_to_slot(start.astimezone(timezone.utc))
        end = end.astimezone(timezone.utc)
        while boundary <= end:
            grid.append(_grid_value(times, values, boundary))
            boundary += SLOT
        return grid

    def mean_power_series(
        self, meter_id: str, register: ObisCode, start: datetime, end: datetime
    ) -> list[PowerSample]:
        """15-minute mean power from consecutive grid values.

        A sample is missing when either endpoint is missing, interpolated
        when either endpoint was interpolated, measured otherwise.
        """
        grid = self.align_to_grid(meter_id, register, start, end)
        samples = []
        for left, right in zip(grid, grid[1:]):
            if left.value_kwh is None or right.value_kwh is None:
                samples.append(
                    PowerSample(meter_id, left.slot_start, None, QUALITY_MISSING)
                )
                continue
            delta = register_delta_kwh(left.value_kwh, right.value_kwh)
            quality = (
                QUALITY_INTERPOLATED
                if QUALITY_INTERPOLATED in (left.quality, right.quality)
                else QUALITY_MEASURED
            )
            samples.append(
                PowerSample(meter_id, left.slot_start, float(delta) * 4000.0, quality)
            )
        return samples


def _ceil_to_slot(ts: datetime) -> datetime:
    epoch = ts.replace(minute=0, second=0, microsecond=0)
    while epoch < ts:
        epoch += SLOT
    return epoch


def _grid_value(times: list[datetime], values: list[Decimal], boundary: datetime) -> GridReading:
    if not times:
        return GridReading(boundary, None, QUALITY_MISSING)
    i = bisect_left(times, boundary)
    # Nearest reading within the snap tolerance; earlier wins a tie.
    best = None
    for j in (i - 1, i):
        if 0 <= j < len(times):
            dist = abs(times[j] - boundary)
            if dist <= SNAP_TOLERANCE and (best is None or dist < best[0]):
                best = (dist, j)
    if best is not None:
        return GridReading(boundary, values[best[1]], QUALITY_MEASURED)
    if i == 0 or i >= len(times):
        return GridReading(boundary, None, QUALITY_MISSING)
    t_prev, t_next = times[i - 1], times[i]
    if t_next - t_prev > MAX_INTERPOLATION_GAP:
        return GridReading(boundary, None, QUALITY_MISSING)
    v_prev, v_next = values[i - 1], values[i]
    if v_next < v_prev and is_rollover(v_prev, v_next):
        v_next = v_next + REGISTER_MODULUS_KWH
    fraction = (boundary - t_prev) / (t_next - t_prev)
    value = v_prev + (v_next - v_prev) * Decimal(str(fraction))
    value = value % REGISTER_MODULUS_KWH
    value = value.quantize(Decimal("0.001"), rounding=ROUND_HALF_EVEN)
    return GridReading(boundary, value, QUALITY_INTERPOLATED)


# -- interchange formats ------------------------------------------------------


def rfc3339(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_rfc3339(text: str) -> datetime:
    raw = text.strip()
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    ts = datetime.fromisoformat(raw)
    if ts.tzinfo is None:
        raise ValueError("timestamp {!r} lacks a timezone".format(text))
    return ts.astimezone(timezone.utc)


def reading_to_record(reading: MeterReading) -> dict:
    return {
        "meter_id": reading.meter_id,
        "timestamp": rfc3339(reading.timestamp),
        "obis": str(reading.register),
        "value_kwh": str(reading.value_kwh),
    }


def reading_from_record(record: dict) -> MeterReading:
    return MeterReading(
        meter_id=str(record["meter_id"]),
        timestamp=parse_rfc3339(str(record["timestamp"])),
        register=ObisCode.parse(str(record["obis"])),
        value_kwh=Decimal(str(record["value_kwh"])),
    )


def write_readings_csv(target: str | Path | TextIO, readings: Iterable[MeterReading]) -> None:
    """Write the readings CSV (header ``meter_id,timestamp,obis,value_kwh``)."""

    def _write(fh: TextIO) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in readings:
            writer.writerow([r.meter_id, rfc3339(r.timestamp), str(r.register), str(r.value_kwh)])

    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="") as fh:
            _write(fh)
    else:
        _write(target)


def read_readings_csv(source: str | Path | TextIO) -> list[MeterReading]:
    """Parse a readings CSV; malformed rows name their line number.

    Raises:
        ReadingsCsvError: missing/invalid header or an unparsable row.
    """

    def _read(fh: TextIO) -> list[MeterReading]:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ReadingsCsvError(1, "empty file; expected header {}".format(",".join(CSV_HEADER)))
        if [h.strip() for h in header] != CSV_HEADER:
            raise ReadingsCsvError(
                1, "bad header {!r}; expected {}".format(",".join(header), ",".join(CSV_HEADER))
            )
        readings = []
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ReadingsCsvError(line_number, "expected 4 columns, got {}".format(len(row)))
            try:
                readings.append(
                    MeterReading(
                        meter_id=row[0],
                        timestamp=parse_rfc3339(row[1]),
                        register=ObisCode.parse(row[2]),
                        value_kwh=Decimal(row[3]),
                    )
                )
            except (ValueError, InvalidOperation) as exc:
                raise ReadingsCsvError(line_number, str(exc)) from exc
        return readings

    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return _read(fh)
    return _read(source)
