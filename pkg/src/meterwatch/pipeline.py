"""End-to-end analysis shared by the CLI and the HTTP service.

Both surfaces call :func:`analyze_meter` with the same configuration, so
a file-based run and a service request over identical readings produce
identical reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Any

from .anomaly import AnomalyReport, anomaly_scores
from .clustering import (
    ClusterModel,
    ClusterSummary,
    KSelectionReport,
    K_MAX,
    kmeans_fit,
    mean_cluster_profiles,
    select_k,
)
from .profiles import (
    DEFAULT_MIN_COMPLETENESS,
    DEFAULT_TIMEZONE,
    DailyProfile,
    ExcludedDay,
    build_daily_profiles,
)
from .protocol import POSITIVE_ACTIVE_ENERGY, ObisCode
from .store import TelemetryStore

DEFAULT_SEED = 42
DEFAULT_TOP_N = 3


class InsufficientDataError(RuntimeError):
    """Not enough readings or profiles to run the requested analysis."""


@dataclass(frozen=True)
class AnalysisConfig:
    seed: int = DEFAULT_SEED
    restarts: int = 10
    min_completeness: float = DEFAULT_MIN_COMPLETENESS
    top_n: int = DEFAULT_TOP_N
    tz_name: str = DEFAULT_TIMEZONE
    k: int | None = None  # None = pick by the knee rule
    k_max: int = K_MAX
    register: ObisCode = POSITIVE_ACTIVE_ENERGY

    def __post_init__(self):
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        if not 1 <= self.k_max <= K_MAX:
            raise ValueError("k_max must lie in 1..{}".format(K_MAX))
        if self.k is not None and not 1 <= self.k <= self.k_max:
            raise ValueError("k must lie in 1..{}".format(self.k_max))

    def with_overrides(self, **kwargs: Any) -> "AnalysisConfig":
        return replace(self, **kwargs)


@dataclass
class MeterAnalysis:
    meter_id: str
    profiles: list[DailyProfile]
    excluded: list[ExcludedDay]
    selection: KSelectionReport | None
    model: ClusterModel
    summary: ClusterSummary
    report: AnomalyReport


def meter_profiles(
    store: TelemetryStore, meter_id: str, config: AnalysisConfig
) -> tuple[list[DailyProfile], list[ExcludedDay]]:
    span = store.span(meter_id, config.register)
    if span is None:
        raise InsufficientDataError("no readings for meter {!r}".format(meter_id))
    samples = store.mean_power_series(meter_id, config.register, span[0], span[1])
    return build_daily_profiles(samples, config.min_completeness, config.tz_name)


def analyze_meter(
    store: TelemetryStore, meter_id: str, config: AnalysisConfig | None = None
) -> MeterAnalysis:
    """Profiles -> cluster-count scan -> k-means fit -> anomaly ranking.

    Raises:
        InsufficientDataError: no readings, or fewer profiles than the
            analysis needs (k_max for the scan, k for a fixed-k fit).
    """
    config = config or AnalysisConfig()
    profiles, excluded = meter_profiles(store, meter_id, config)

    if config.k is not None:
        if len(profiles) < config.k:
            raise InsufficientDataError(
                "{} profile(s) available, k={} requested".format(len(profiles), config.k)
            )
        selection = None
        k = config.k
    else:
        if len(profiles) < config.k_max:
            raise InsufficientDataError(
                "{} profile(s) available; scanning k=1..{} needs at least {}".format(
                    len(profiles), config.k_max, config.k_max
                )
            )
        selection = select_k(
            profiles, seed=config.seed, restarts=config.restarts, k_max=config.k_max
        )
        k = selection.recommended_k

    model = kmeans_fit(profiles, k, seed=config.seed, restarts=config.restarts)
    summary = mean_cluster_profiles(model)
    report = anomaly_scores(model, profiles)
    return MeterAnalysis(
        meter_id=meter_id,
        profiles=profiles,
        excluded=excluded,
        selection=selection,
        model=model,
        summary=summary,
        report=report,
    )


def canonical_json(data: Any) -> str:
    """Stable JSON text for byte-for-byte comparisons across surfaces."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)
