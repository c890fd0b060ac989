"""Thin HTTP adapter over the telemetry store and analysis pipeline.

Endpoints:

* ``POST /v1/readings`` - newline-delimited JSON reading records
  (``meter_id``, ``timestamp``, ``obis``, ``value_kwh``); responds with
  the ingestion stats delta.
* ``GET /v1/meters/{id}/power?from=...&to=...`` - 15-minute mean-power
  samples (RFC 3339 bounds; defaults to the meter's full span).
* ``GET /v1/meters/{id}/anomalies?k=&seed=&restarts=&min_completeness=`` -
  the current anomaly report, recomputed on demand with the same defaults
  the CLI uses.

All logic lives in the library; handlers only translate HTTP.  An
``Authorization`` header is accepted and ignored (pass-through stub).
"""

from __future__ import annotations

import json
import re
import signal
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .pipeline import AnalysisConfig, InsufficientDataError, analyze_meter, canonical_json
from .store import (
    ConflictingDuplicate,
    NonMonotonicRegister,
    TelemetryStore,
    parse_rfc3339,
    reading_from_record,
    rfc3339,
)

_POWER_RE = re.compile(r"^/v1/meters/([^/]+)/power$")
_ANOMALIES_RE = re.compile(r"^/v1/meters/([^/]+)/anomalies$")


class MeterServiceHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def store(self) -> TelemetryStore:
        return self.server.store  # type: ignore[attr-defined]

    @property
    def config(self) -> AnalysisConfig:
        return self.server.config  # type: ignore[attr-defined]

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        if getattr(self.server, "verbose", False):
            super().log_message(format, *args)

    def _send(self, status: int, payload: str, content_type: str = "application/json") -> None:
        body = payload.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error(self, status: int, message: str) -> None:
        self._send(status, canonical_json({"error": message}))

    def do_POST(self) -> None:
        if urlparse(self.path).path != "/v1/readings":
            self._send_error(404, "unknown endpoint")
            return
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length).decode("utf-8")
        try:
            readings = [
                reading_from_record(json.loads(line))
                for line in raw.splitlines()
                if line.strip()
            ]
        except (ValueError, KeyError) as exc:
            self._send_error(400, "bad reading record: {}".format(exc))
            return
        try:
            delta = self.store.ingest(readings)
        except (ConflictingDuplicate, NonMonotonicRegister) as exc:
            self._send_error(409, str(exc))
            return
        self._send(200, canonical_json(delta.to_json_dict()))

    def do_GET(self) -> None:
        parsed = urlparse(self.path)
        query = {k: v[-1] for k, v in parse_qs(parsed.query).items()}

        m = _POWER_RE.match(parsed.path)
        if m:
            self._handle_power(m.group(1), query)
            return
        m = _ANOMALIES_RE.match(parsed.path)
        if m:
            self._handle_anomalies(m.group(1), query)
            return
        self._send_error(404, "unknown endpoint")

    def _require_meter(self, meter_id: str) -> bool:
        if meter_id not in self.store.meters():
            self._send_error(404, "unknown meter {!r}".format(meter_id))
            return False
        return True

    def _handle_power(self, meter_id: str, query: dict[str, str]) -> None:
        if not self._require_meter(meter_id):
            return
        span = self.store.span(meter_id, self.config.register)
        try:
            start = parse_rfc3339(query["from"]) if "from" in query else span[0]
            end = parse_rfc3339(query["to"]) if "to" in query else span[1]
        except ValueError as exc:
            self._send_error(400, str(exc))
            return
        samples = self.store.mean_power_series(meter_id, self.config.register, start, end)
        payload = [
            {
                "meter_id": s.meter_id,
                "slot_start": rfc3339(s.slot_start),
                "mean_power_w": s.mean_power_w,
                "quality": s.quality,
            }
            for s in samples
        ]
        self._send(200, canonical_json(payload))

    def _handle_anomalies(self, meter_id: str, query: dict[str, str]) -> None:
        if not self._require_meter(meter_id):
            return
        config = self.config
        try:
            overrides = {}
            if "k" in query:
                overrides["k"] = int(query["k"])
            if "seed" in query:
                overrides["seed"] = int(query["seed"])
            if "restarts" in query:
                overrides["restarts"] = int(query["restarts"])
            if "min_completeness" in query:
                overrides["min_completeness"] = float(query["min_completeness"])
            if overrides:
                config = config.with_overrides(**overrides)
        except ValueError as exc:
            self._send_error(400, str(exc))
            return
        try:
            analysis = analyze_meter(self.store, meter_id, config)
        except InsufficientDataError as exc:
            self._send_error(409, str(exc))
            return
        self._send(200, canonical_json(analysis.report.to_json_dict()))


def make_server(
    store: TelemetryStore,
    config: AnalysisConfig | None = None,
    host: str = "127.0.0.1",
    port: int = 8720,
    verbose: bool = False,
) -> ThreadingHTTPServer:
    """Bind the service; raises OSError when the port is taken."""
    server = ThreadingHTTPServer((host, port), MeterServiceHandler)
    server.store = store  # type: ignore[attr-defined]
    server.config = config or AnalysisConfig()  # type: ignore[attr-defined]
    server.verbose = verbose  # type: ignore[attr-defined]
    return server


def run_server(server: ThreadingHTTPServer) -> None:
    """Serve until SIGINT/SIGTERM, then shut down cleanly."""
    stop = threading.Event()

    def _handle(signum, frame):
        stop.set()
        threading.Thread(target=server.shutdown, daemon=True).start()

    signal.signal(signal.SIGINT, _handle)
    signal.signal(signal.SIGTERM, _handle)
    try:
        server.serve_forever(poll_interval=0.2)
    finally:
        server.server_close()
