"""Command-line interface tying the pipeline together.

Commands: ``simulate`` (synthetic readings), ``ingest`` (CSV into a store
directory), ``analyze`` (readings CSV to profiles, clustering, anomaly
report, and SVG charts), ``serve`` (HTTP service), and ``casestudy``
(simulate and analyze all four built-in personas).

Exit codes: 0 success, 1 runtime error, 2 usage error.  Options may also
come from a JSON config file (``--config``); explicit flags win.
"""

from __future__ import annotations

import json
from datetime import date, timedelta
from pathlib import Path

import click

from . import __version__
from .charts import anomaly_chart, cluster_chart, user_means_chart
from .personas import PERSONA_IDS, build_persona
from .pipeline import (
    AnalysisConfig,
    DEFAULT_SEED,
    InsufficientDataError,
    MeterAnalysis,
    analyze_meter,
    canonical_json,
)
from .profiles import write_profiles_csv
from .service import make_server, run_server
from .simulator import AnomalyScript, SimOutput, simulate_period
from .store import (
    ReadingsCsvError,
    StoreError,
    TelemetryStore,
    read_readings_csv,
    write_readings_csv,
)

DEFAULT_START = "2024-06-03"
DEFAULT_DAYS = 30
STORE_FILENAME = "readings.ndjson"

# Case-study scripts: one of each disruption kind for S1 (mirroring the
# kinds of days caregivers care about) and a two-day trip for S2.
CASESTUDY_SCRIPT_OFFSETS = {
    "S1": (("absence-morning", 9), ("shifted-morning", 16), ("evening-baking", 23)),
    "S2": (("full-absence", 11), ("full-absence", 12)),
}


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise click.ClickException("config file must hold a JSON object")
    return data


def _merged(flag_value, config: dict, key: str, default):
    if flag_value is not None:
        return flag_value
    return config.get(key, default)


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Routine monitoring from 15-minute electricity meter readouts."""


def _parse_scripts(entries, start: date) -> list[AnomalyScript]:
    scripts = []
    for entry in entries:
        if "day" in entry:
            day = date.fromisoformat(entry["day"])
        elif "day_offset" in entry:
            day = start + timedelta(days=int(entry["day_offset"]))
        else:
            raise click.ClickException("script entry needs a day or day_offset")
        scripts.append(AnomalyScript(entry["kind"], day, entry.get("parameters")))
    return scripts


def _simulate_one(
    persona_id: str, start: date, days: int, seed: int, scripts: list[AnomalyScript], out: Path
) -> SimOutput:
    persona = build_persona(persona_id)
    sim = simulate_period(persona, start, days, scripts, seed)
    write_readings_csv(out / "{}_readings.csv".format(persona_id), sim.readings)
    truth = {
        "meter_id": sim.meter_id,
        "seed": seed,
        "labels": {d.isoformat(): label for d, label in sorted(sim.truth_labels.items())},
    }
    (out / "{}_truth.json".format(persona_id)).write_text(
        json.dumps(truth, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return sim


@main.command()
@click.option(
    "--persona",
    "personas",
    multiple=True,
    type=click.Choice(PERSONA_IDS),
    help="Persona to simulate (repeatable); default: all four.",
)
@click.option("--days", type=int, default=None, help="Days to simulate (default 30).")
@click.option("--seed", type=int, default=None, help="Simulation seed (default 42).")
@click.option("--start", "start_text", default=None, help="First day, ISO date (default {}).".format(DEFAULT_START))
@click.option("--scripts", "scripts_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file mapping persona id to anomaly scripts.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def simulate(personas, days, seed, start_text, scripts_path, config_path, out_dir) -> None:
    """Write synthetic readings CSV and truth-label JSON per persona."""
    config = _load_config_file(config_path)
    personas = tuple(personas) or tuple(config.get("personas", PERSONA_IDS))
    days = int(_merged(days, config, "days", DEFAULT_DAYS))
    seed = int(_merged(seed, config, "seed", DEFAULT_SEED))
    start = date.fromisoformat(_merged(start_text, config, "start", DEFAULT_START))
    if days < 1:
        raise click.BadParameter("--days must be >= 1")

    scripts_by_persona: dict[str, list[AnomalyScript]] = {}
    if scripts_path is not None:
        with open(scripts_path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        for pid, entries in raw.items():
            scripts_by_persona[pid] = _parse_scripts(entries, start)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        for pid in personas:
            _simulate_one(pid, start, days, seed, scripts_by_persona.get(pid, []), out)
    except (ValueError, StoreError) as exc:
        raise click.ClickException(str(exc))
    click.echo("wrote readings for {} persona(s) to {}".format(len(personas), out))


@main.command()
@click.argument("csv_files", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--store", "store_dir", type=click.Path(file_okay=False), required=True,
              envvar="METERWATCH_DATA_DIR", show_envvar=True)
def ingest(csv_files, store_dir) -> None:
    """Ingest readings CSV file(s) into a store directory."""
    store_path = Path(store_dir)
    store_path.mkdir(parents=True, exist_ok=True)
    store = TelemetryStore(store_path / STORE_FILENAME)
    total = None
    try:
        for csv_file in csv_files:
            readings = read_readings_csv(csv_file)
            delta = store.ingest(readings)
            if total is None:
                total = delta
            else:
                total.add(delta)
    except (ReadingsCsvError, StoreError) as exc:
        raise click.ClickException(str(exc))
    click.echo(canonical_json(total.to_json_dict()))


def _analysis_outputs(analysis: MeterAnalysis, meter_out: Path, top_n: int) -> None:
    meter_out.mkdir(parents=True, exist_ok=True)
    write_profiles_csv(meter_out / "profiles.csv", analysis.profiles)
    _write_json(meter_out / "cluster_model.json", analysis.model.to_json_dict())
    _write_json(meter_out / "cluster_summary.json", analysis.summary.to_json_dict())
    if analysis.selection is not None:
        _write_json(meter_out / "k_selection.json", analysis.selection.to_json_dict())
    _write_json(meter_out / "anomaly_report.json", analysis.report.to_json_dict())
    if analysis.excluded:
        _write_json(
            meter_out / "excluded_days.json",
            [
                {"day": e.day.isoformat(), "reason": e.reason}
                for e in analysis.excluded
            ],
        )
    (meter_out / "clusters.svg").write_text(
        cluster_chart(analysis.profiles, analysis.model), encoding="utf-8"
    )
    (meter_out / "anomalies.svg").write_text(
        _anomaly_overlay(analysis, top_n), encoding="utf-8"
    )


def _anomaly_overlay(analysis: MeterAnalysis, top_n: int) -> str:
    by_day = {p.day: p for p in analysis.profiles}
    panels = []
    for day in analysis.report.top(top_n):
        profile = by_day[day]
        cluster = analysis.model.assignments.get(day)
        if cluster is None:
            cluster = int(
                min(
                    range(analysis.model.k),
                    key=lambda c: sum(
                        (v - analysis.model.centroids[c][i]) ** 2
                        for i, v in enumerate(profile.values)
                    ),
                )
            )
        title = "{} (score {:.0f} W)".format(day.isoformat(), analysis.report.scores[day])
        panels.append((title, profile.values, list(analysis.model.centroids[cluster])))
    return anomaly_chart(panels)


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _analyze_store(store: TelemetryStore, out: Path, config: AnalysisConfig) -> dict[str, MeterAnalysis]:
    meters = store.meters()
    if not meters:
        raise click.ClickException("no readings")
    analyses: dict[str, MeterAnalysis] = {}
    for meter_id in meters:
        try:
            analysis = analyze_meter(store, meter_id, config)
        except InsufficientDataError as exc:
            raise click.ClickException("meter {}: {}".format(meter_id, exc))
        analyses[meter_id] = analysis
        _analysis_outputs(analysis, out / meter_id, config.top_n)
    chart = user_means_chart(
        {m: [list(row) for row in a.summary.centroids] for m, a in analyses.items()}
    )
    (out / "user_means.svg").write_text(chart, encoding="utf-8")
    return analyses


@main.command()
@click.argument("csv_files", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=None, help="Clustering seed (default 42).")
@click.option("--restarts", type=int, default=None, help="k-means restarts (default 10).")
@click.option("--min-completeness", type=float, default=None, help="Profile completeness floor (default 0.9).")
@click.option("--top-n", type=int, default=None, help="Anomalous days to chart (default 3).")
@click.option("--k", type=int, default=None, help="Fix the cluster count instead of scanning 1..6.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
def analyze(csv_files, out_dir, seed, restarts, min_completeness, top_n, k, config_path) -> None:
    """Cluster daily profiles from readings CSVs and rank anomalous days."""
    config_file = _load_config_file(config_path)
    try:
        config = AnalysisConfig(
            seed=int(_merged(seed, config_file, "seed", DEFAULT_SEED)),
            restarts=int(_merged(restarts, config_file, "restarts", 10)),
            min_completeness=float(_merged(min_completeness, config_file, "min_completeness", 0.9)),
            top_n=int(_merged(top_n, config_file, "top_n", 3)),
            k=_merged(k, config_file, "k", None),
        )
    except ValueError as exc:
        raise click.BadParameter(str(exc))

    store = TelemetryStore()
    try:
        for csv_file in csv_files:
            readings = read_readings_csv(csv_file)
            store.ingest(readings)
    except (ReadingsCsvError, StoreError) as exc:
        raise click.ClickException(str(exc))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    analyses = _analyze_store(store, out, config)
    for meter_id, analysis in sorted(analyses.items()):
        k_text = (
            "k={}".format(analysis.model.k)
            if analysis.selection is None
            else "k={} (recommended)".format(analysis.selection.recommended_k)
        )
        click.echo(
            "{}: {} profiles, {}, top anomalies: {}".format(
                meter_id,
                len(analysis.profiles),
                k_text,
                ", ".join(d.isoformat() for d in analysis.report.top(config.top_n)),
            )
        )


@main.command()
@click.option("--store", "store_dir", type=click.Path(exists=True, file_okay=False), required=True,
              envvar="METERWATCH_DATA_DIR", show_envvar=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8720, show_default=True)
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option("--verbose", is_flag=True, default=False)
def serve(store_dir, host, port, seed, verbose) -> None:
    """Serve ingestion and analysis endpoints over HTTP."""
    store = TelemetryStore(Path(store_dir) / STORE_FILENAME)
    config = AnalysisConfig(seed=seed)
    try:
        server = make_server(store, config, host=host, port=port, verbose=verbose)
    except OSError as exc:
        raise click.ClickException("cannot bind {}:{}: {}".format(host, port, exc))
    click.echo("serving on http://{}:{}".format(host, port))
    run_server(server)


@main.command()
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--days", type=int, default=DEFAULT_DAYS, show_default=True)
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option("--start", "start_text", default=DEFAULT_START, show_default=True)
def casestudy(out_dir, days, seed, start_text) -> None:
    """Simulate S1..S4 for a month and run the full analysis on each."""
    start = date.fromisoformat(start_text)
    out = Path(out_dir)
    sim_dir = out / "simulated"
    sim_dir.mkdir(parents=True, exist_ok=True)

    store = TelemetryStore()
    truths: dict[str, SimOutput] = {}
    try:
        for pid in PERSONA_IDS:
            scripts = [
                AnomalyScript(kind, start + timedelta(days=offset))
                for kind, offset in CASESTUDY_SCRIPT_OFFSETS.get(pid, ())
                if offset < days
            ]
            sim = _simulate_one(pid, start, days, seed, scripts, sim_dir)
            truths[pid] = sim
            store.ingest(sim.readings)
    except (ValueError, StoreError) as exc:
        raise click.ClickException(str(exc))

    config = AnalysisConfig(seed=seed)
    analyses = _analyze_store(store, out, config)
    _write_casestudy_summary(out, analyses, truths)
    click.echo("case study written to {}".format(out))


def _write_casestudy_summary(
    out: Path, analyses: dict[str, MeterAnalysis], truths: dict[str, SimOutput]
) -> None:
    lines = ["# Case study summary", ""]
    for meter_id in sorted(analyses):
        analysis = analyses[meter_id]
        selection = analysis.selection
        lines.append("## {}".format(meter_id))
        lines.append("")
        lines.append("- profiles: {}".format(len(analysis.profiles)))
        if selection is not None:
            lines.append(
                "- recommended clusters: {} (inertia by k: {})".format(
                    selection.recommended_k,
                    ", ".join("{:.0f}".format(i) for i in selection.inertias),
                )
            )
        counts = analysis.summary.counts
        lines.append(
            "- cluster sizes: {} (most typical: cluster {})".format(
                counts, analysis.summary.most_populated + 1
            )
        )
        lines.append("- top anomalous days:")
        truth_labels = truths[meter_id].truth_labels if meter_id in truths else {}
        for day in analysis.report.top(3):
            label = truth_labels.get(day, "?")
            flag = "flagged" if day in analysis.report.flagged else "not flagged"
            lines.append(
                "    - {}: score {:.0f} W, {} (simulated as: {})".format(
                    day.isoformat(), analysis.report.scores[day], flag, label
                )
            )
        lines.append("")
    (out / "summary.md").write_text("\n".join(lines), encoding="utf-8")


if __name__ == "__main__":
    main()
