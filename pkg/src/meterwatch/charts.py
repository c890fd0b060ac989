"""Static SVG charts of daily profiles, cluster means, and anomalous days.

Hand-rolled SVG keeps the output deterministic and dependency-free; each
chart is a row of panels sharing one power scale.  Styling is carried by
polyline classes: ``member`` (thin grey day lines), ``mean`` (thick black
cluster mean), ``anomaly`` (red day line).
"""

from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

from .clustering import ClusterModel
from .profiles import SLOTS_PER_DAY, DailyProfile

PANEL_W = 320
PANEL_H = 220
MARGIN_L = 44
MARGIN_B = 28
MARGIN_T = 24
MARGIN_R = 10

_STYLE = (
    "polyline{fill:none}"
    ".member{stroke:#9aa7b0;stroke-width:0.7}"
    ".mean{stroke:#000;stroke-width:2.2}"
    ".anomaly{stroke:#d62728;stroke-width:1.6}"
    "text{font-family:sans-serif;font-size:11px;fill:#333}"
    ".axis{stroke:#555;stroke-width:1}"
)


def _points(values: Sequence[float], y_max: float, x0: float) -> str:
    plot_w = PANEL_W - MARGIN_L - MARGIN_R
    plot_h = PANEL_H - MARGIN_T - MARGIN_B
    pts = []
    for slot, value in enumerate(values):
        x = x0 + MARGIN_L + plot_w * slot / (SLOTS_PER_DAY - 1)
        y = MARGIN_T + plot_h * (1.0 - min(value, y_max) / y_max)
        pts.append("{:.1f},{:.1f}".format(x, y))
    return " ".join(pts)


def _panel_frame(x0: float, title: str, y_max: float) -> list[str]:
    plot_w = PANEL_W - MARGIN_L - MARGIN_R
    bottom = PANEL_H - MARGIN_B
    parts = [
        '<text x="{:.0f}" y="14">{}</text>'.format(x0 + MARGIN_L, escape(title)),
        '<line class="axis" x1="{0:.0f}" y1="{1}" x2="{2:.0f}" y2="{1}"/>'.format(
            x0 + MARGIN_L, bottom, x0 + MARGIN_L + plot_w
        ),
        '<line class="axis" x1="{0:.0f}" y1="{1}" x2="{0:.0f}" y2="{2}"/>'.format(
            x0 + MARGIN_L, MARGIN_T, bottom
        ),
        '<text x="{:.0f}" y="{}">0h</text>'.format(x0 + MARGIN_L - 4, bottom + 14),
        '<text x="{:.0f}" y="{}">12h</text>'.format(x0 + MARGIN_L + plot_w / 2 - 10, bottom + 14),
        '<text x="{:.0f}" y="{}">24h</text>'.format(x0 + MARGIN_L + plot_w - 14, bottom + 14),
        '<text x="{:.0f}" y="{}">{:.0f} W</text>'.format(x0 + 2, MARGIN_T + 8, y_max),
    ]
    return parts


def _document(panels: int, body: list[str]) -> str:
    width = PANEL_W * panels
    head = (
        '<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        'viewBox="0 0 {w} {h}">'.format(w=width, h=PANEL_H)
    )
    return head + "<style>" + _STYLE + "</style>" + "".join(body) + "</svg>"


def _scale(*value_groups: Sequence[Sequence[float]]) -> float:
    top = 0.0
    for group in value_groups:
        for values in group:
            if len(values):
                top = max(top, max(values))
    return max(top * 1.05, 1.0)


def cluster_chart(profiles: Sequence[DailyProfile], model: ClusterModel) -> str:
    """One panel per cluster: member day lines plus the thick mean profile."""
    by_day = {p.day: p for p in profiles}
    y_max = _scale([p.values for p in profiles], list(model.centroids))
    body: list[str] = []
    for cluster in range(model.k):
        x0 = float(cluster * PANEL_W)
        members = [d for d, c in sorted(model.assignments.items()) if c == cluster]
        body.extend(
            _panel_frame(x0, "cluster {} ({} days)".format(cluster + 1, len(members)), y_max)
        )
        for day in members:
            if day in by_day:
                body.append(
                    '<polyline class="member" points="{}"/>'.format(
                        _points(by_day[day].values, y_max, x0)
                    )
                )
        body.append(
            '<polyline class="mean" points="{}"/>'.format(
                _points(list(model.centroids[cluster]), y_max, x0)
            )
        )
    return _document(model.k, body)


def user_means_chart(user_centroids: Mapping[str, Sequence[Sequence[float]]]) -> str:
    """One panel per user showing that user's mean cluster profiles."""
    users = sorted(user_centroids)
    y_max = _scale(*[user_centroids[u] for u in users])
    body: list[str] = []
    for index, user in enumerate(users):
        x0 = float(index * PANEL_W)
        body.extend(_panel_frame(x0, user, y_max))
        for centroid in user_centroids[user]:
            body.append(
                '<polyline class="mean" points="{}"/>'.format(_points(centroid, y_max, x0))
            )
    return _document(max(len(users), 1), body)


def anomaly_chart(
    anomalies: Sequence[tuple[str, Sequence[float], Sequence[float]]]
) -> str:
    """One panel per anomalous day: red day line over its nearest mean profile.

    ``anomalies`` holds (title, day_values, nearest_centroid) triples.
    """
    y_max = _scale(
        [values for _, values, _ in anomalies], [mean for _, _, mean in anomalies]
    )
    body: list[str] = []
    for index, (title, values, mean) in enumerate(anomalies):
        x0 = float(index * PANEL_W)
        body.extend(_panel_frame(x0, title, y_max))
        body.append('<polyline class="mean" points="{}"/>'.format(_points(mean, y_max, x0)))
        body.append('<polyline class="anomaly" points="{}"/>'.format(_points(values, y_max, x0)))
    return _document(max(len(anomalies), 1), body)
