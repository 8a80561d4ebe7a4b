#services/report.py

"""CSV tables, standalone SVG charts and the markdown study summary.

CSV column schemas:

* metric series: run_id, noise_mode, noise_rate, metric, epoch, train, heldout
* score curves:  run_id, noise_mode, noise_rate, split, rank, score
* CSR reports:   run_id, noise_rate, epoch, test_size, critical_count, ratio,
  queries_issued, correct_count, critical_correct

Reals are written with 9 significant digits. Nothing here reads the clock.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

from memgauge.errors import EmptyInput, HeterogeneousArtifacts, IoFailure, MissingRun, SchemaViolation, TooManySeries
from memgauge.models.metrics import MetricSeries, ScoreCurve
from memgauge.models.oracle import CsrReport
from memgauge.services.metrics import curve_shape

logger = logging.getLogger("memgauge")

SERIES_COLUMNS = ("run_id", "noise_mode", "noise_rate", "metric", "epoch", "train", "heldout")
CURVE_COLUMNS = ("run_id", "noise_mode", "noise_rate", "split", "rank", "score")
CSR_COLUMNS = (
    "run_id", "noise_rate", "epoch", "test_size", "critical_count", "ratio",
    "queries_issued", "correct_count", "critical_correct",
)

WIDTH, HEIGHT = 640, 480
MARGIN_X, MARGIN_Y = WIDTH * 0.1, HEIGHT * 0.1
MAX_POLYLINES = 10
RATE_COLORS = {0.0: "#1f77b4", 0.25: "#ff7f0e", 0.5: "#2ca02c", 0.75: "#d62728", 1.0: "#9467bd"}
FALLBACK_COLORS = ("#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def _kind(artifacts: Sequence) -> type:
    kinds = {type(artifact) for artifact in artifacts}
    if len(kinds) > 1:
        raise HeterogeneousArtifacts(f"cannot mix {sorted(k.__name__ for k in kinds)} in one table")
    return kinds.pop()


def _series_rows(series: Sequence[MetricSeries]) -> List[list]:
    rows = []
    for s in series:
        for epoch in range(s.epoch_count):
            train = s.train[epoch] if epoch < len(s.train) else None
            heldout = s.heldout[epoch] if epoch < len(s.heldout) else None
            rows.append([s.run_id, s.noise_mode, s.noise_rate, s.metric, epoch, train, heldout])
    rows.sort(key=lambda r: (r[2], r[4], r[3], r[0]))
    return rows


def _curve_rows(curves: Sequence[ScoreCurve]) -> List[list]:
    rows = [
        [c.run_id, c.noise_mode, c.noise_rate, c.split, rank, value]
        for c in curves
        for rank, value in enumerate(c.values)
    ]
    rows.sort(key=lambda r: (r[2], r[4], r[3], r[0]))
    return rows


def _csr_rows(reports: Sequence[CsrReport]) -> List[list]:
    rows = [
        [r.run_id, r.noise_rate, r.epoch, r.test_size, r.critical_count, r.ratio,
         r.queries_issued, r.correct_count, r.critical_correct]
        for r in reports
    ]
    rows.sort(key=lambda r: (r[1], -1 if r[2] is None else r[2], r[0]))
    return rows


_TABLES = {
    MetricSeries: (SERIES_COLUMNS, _series_rows),
    ScoreCurve: (CURVE_COLUMNS, _curve_rows),
    CsrReport: (CSR_COLUMNS, _csr_rows),
}


def emit_csv(artifacts: Iterable, path, kind: Optional[type] = None) -> Path:
    """Write one homogeneous artifact collection as a CSV table.

    ``kind`` picks the header for an empty collection (metric series by default).
    """
    artifacts = list(artifacts)
    kind = _kind(artifacts) if artifacts else (kind or MetricSeries)
    columns, to_rows = _TABLES[kind]
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            for row in to_rows(artifacts):
                writer.writerow([_fmt(value) for value in row])
    except OSError as e:
        raise IoFailure(path, str(e)) from e
    logger.debug(f"Wrote {kind.__name__} table {path}")
    return path


def load_metric_csv(path) -> List[MetricSeries]:
    """Read a metric-series CSV back into MetricSeries, one per (run, metric)."""
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as handle:
            reader = csv.DictReader(handle)
            if tuple(reader.fieldnames or ()) != SERIES_COLUMNS:
                raise SchemaViolation(1, "header", f"expected columns {','.join(SERIES_COLUMNS)}")
            grouped: Dict[Tuple[str, str], dict] = {}
            for line, row in enumerate(reader, start=2):
                try:
                    key = (row["run_id"], row["metric"])
                    entry = grouped.setdefault(key, {
                        "noise_rate": float(row["noise_rate"]),
                        "noise_mode": row["noise_mode"],
                        "rows": [],
                    })
                    entry["rows"].append((
                        int(row["epoch"]),
                        float(row["train"]) if row["train"] else None,
                        float(row["heldout"]) if row["heldout"] else None,
                    ))
                except (TypeError, ValueError) as e:
                    raise SchemaViolation(line, "value", str(e)) from e
    except FileNotFoundError as e:
        raise IoFailure(path, "metric table not found") from e
    except OSError as e:
        raise IoFailure(path, str(e)) from e

    series = []
    for (run_id, metric), entry in grouped.items():
        rows = sorted(entry["rows"])
        series.append(MetricSeries(
            run_id=run_id,
            metric=metric,
            noise_rate=entry["noise_rate"],
            noise_mode=entry["noise_mode"],
            train=tuple(r[1] for r in rows if r[1] is not None),
            heldout=tuple(r[2] for r in rows if r[2] is not None),
        ))
    return series


# ---------------------------------------------------------------------------
# SVG

@dataclass
class _Line:
    label: str
    color: str
    dashed: bool
    values: Tuple[float, ...]


def rate_color(rate: float, position: int = 0) -> str:
    for known, color in RATE_COLORS.items():
        if abs(rate - known) < 1e-9:
            return color
    return FALLBACK_COLORS[position % len(FALLBACK_COLORS)]


def _percent(rate: float) -> str:
    return f"{rate * 100:g}%"


def _collect_lines(artifacts: Sequence, style: str) -> Tuple[List[_Line], str, str]:
    if style == "trajectory":
        if _kind(artifacts) is not MetricSeries:
            raise HeterogeneousArtifacts("trajectory charts take metric series")
        lines = []
        for position, s in enumerate(artifacts):
            color = rate_color(s.noise_rate, position)
            if s.train:
                lines.append(_Line(f"{_percent(s.noise_rate)} train", color, False, s.train))
            if s.heldout:
                lines.append(_Line(f"{_percent(s.noise_rate)} heldout", color, True, s.heldout))
        return lines, artifacts[0].metric, "epoch"
    if style == "curve":
        if _kind(artifacts) is not ScoreCurve:
            raise HeterogeneousArtifacts("curve charts take score curves")
        lines = [
            _Line(f"{_percent(c.noise_rate)} {c.split}", rate_color(c.noise_rate, position), c.split != "train", c.values)
            for position, c in enumerate(artifacts)
        ]
        return lines, "mean score", "sample rank"
    raise ValueError(f"unknown chart style '{style}'")


def render_svg(artifacts: Sequence, style: str, title: Optional[str] = None) -> str:
    artifacts = list(artifacts)
    if not artifacts:
        raise EmptyInput("nothing to plot")
    lines, y_label, x_label = _collect_lines(artifacts, style)
    if not lines or not any(line.values for line in lines):
        raise EmptyInput("all series are empty")
    if len(lines) > MAX_POLYLINES:
        raise TooManySeries(f"{len(lines)} polylines exceed the limit of {MAX_POLYLINES}")

    values = [v for line in lines for v in line.values]
    low, high = min(0.0, min(values)), max(1.0, max(values))
    longest = max(len(line.values) for line in lines)
    plot_w, plot_h = WIDTH - 2 * MARGIN_X, HEIGHT - 2 * MARGIN_Y

    def x_at(i: int) -> float:
        return MARGIN_X + (plot_w * i / (longest - 1) if longest > 1 else 0.0)

    def y_at(v: float) -> float:
        return HEIGHT - MARGIN_Y - plot_h * (v - low) / (high - low)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" style="fill:#ffffff"/>',
        f'<line x1="{MARGIN_X:.2f}" y1="{HEIGHT - MARGIN_Y:.2f}" x2="{WIDTH - MARGIN_X:.2f}" y2="{HEIGHT - MARGIN_Y:.2f}" style="stroke:#000000;stroke-width:1"/>',
        f'<line x1="{MARGIN_X:.2f}" y1="{MARGIN_Y:.2f}" x2="{MARGIN_X:.2f}" y2="{HEIGHT - MARGIN_Y:.2f}" style="stroke:#000000;stroke-width:1"/>',
        f'<text x="{WIDTH / 2:.2f}" y="{HEIGHT - MARGIN_Y / 4:.2f}" style="font-family:sans-serif;font-size:12px;text-anchor:middle">{escape(x_label)}</text>',
        f'<text x="{MARGIN_X / 4:.2f}" y="{HEIGHT / 2:.2f}" transform="rotate(-90 {MARGIN_X / 4:.2f} {HEIGHT / 2:.2f})" style="font-family:sans-serif;font-size:12px;text-anchor:middle">{escape(y_label)}</text>',
        f'<text x="{MARGIN_X - 4:.2f}" y="{y_at(low):.2f}" style="font-family:sans-serif;font-size:10px;text-anchor:end">{low:.3g}</text>',
        f'<text x="{MARGIN_X - 4:.2f}" y="{y_at(high):.2f}" style="font-family:sans-serif;font-size:10px;text-anchor:end">{high:.3g}</text>',
        f'<text x="{x_at(0):.2f}" y="{HEIGHT - MARGIN_Y + 14:.2f}" style="font-family:sans-serif;font-size:10px;text-anchor:middle">0</text>',
        f'<text x="{x_at(longest - 1):.2f}" y="{HEIGHT - MARGIN_Y + 14:.2f}" style="font-family:sans-serif;font-size:10px;text-anchor:middle">{longest - 1}</text>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.2f}" y="{MARGIN_Y / 2:.2f}" style="font-family:sans-serif;font-size:14px;text-anchor:middle">{escape(title)}</text>')

    for index, line in enumerate(lines):
        points = " ".join(f"{x_at(i):.2f},{y_at(v):.2f}" for i, v in enumerate(line.values))
        dash = ";stroke-dasharray:6,4" if line.dashed else ""
        out.append(f'<polyline points="{points}" style="fill:none;stroke:{line.color};stroke-width:1.5{dash}"/>')
        legend_y = MARGIN_Y + 14 * index
        out.append(
            f'<text x="{WIDTH - MARGIN_X + 4:.2f}" y="{legend_y:.2f}" '
            f'style="font-family:sans-serif;font-size:9px;fill:{line.color}">{escape(line.label)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(artifacts: Iterable, style: str, path, title: Optional[str] = None) -> Path:
    """Render a trajectory (metric series) or curve (score curves) chart as SVG."""
    text = render_svg(list(artifacts), style, title)
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise IoFailure(path, str(e)) from e
    return path


# ---------------------------------------------------------------------------
# study summary

@dataclass
class RunSummary:
    """Analysis results of one noise-rate run"""
    rate: float
    run_id: str
    series: Dict[str, MetricSeries] = field(default_factory=dict)
    curves: Dict[str, ScoreCurve] = field(default_factory=dict)
    csr: Sequence[CsrReport] = ()
    status: str = "completed"


def _table(header: Sequence[str], rows: Iterable[Sequence[str]]) -> List[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return lines


def gini_ordering(runs: Sequence[RunSummary]) -> Tuple[bool, List[str]]:
    """Whether final-epoch train-loss Gini strictly decreases as noise grows."""
    finals = [(run.rate, run.series["gini"].final("train")) for run in runs if "gini" in run.series and run.series["gini"].train]
    violations = [
        f"{_percent(a_rate)} ({a:.4g}) <= {_percent(b_rate)} ({b:.4g})"
        for (a_rate, a), (b_rate, b) in zip(finals, finals[1:])
        if a <= b
    ]
    return not violations, violations


def study_summary(
    name: str,
    rates: Sequence[float],
    runs: Sequence[RunSummary],
    files: Sequence[str] = (),
    header: Optional[Mapping[str, str]] = None,
) -> str:
    """Markdown summary: final-epoch tables per metric, Gini ordering, CSR, file index."""
    by_rate = {round(run.rate, 9): run for run in runs}
    ordered = []
    for rate in sorted(rates):
        run = by_rate.get(round(rate, 9))
        if run is None:
            raise MissingRun(rate)
        ordered.append(run)
    columns = [_percent(run.rate) for run in ordered]

    out = [f"# Study {name}", ""]
    for key, value in (header or {}).items():
        out.append(f"- {key}: {value}")
    if header:
        out.append("")

    out += ["## Runs", ""]
    out += _table(["rate", "run", "status"], ([_percent(r.rate), r.run_id, r.status] for r in ordered))
    out.append("")

    metrics = sorted({metric for run in ordered for metric in run.series})
    if metrics:
        out += ["## Final-epoch metrics", ""]
        rows = []
        for metric in metrics:
            for split in ("train", "heldout"):
                cells = []
                for run in ordered:
                    s = run.series.get(metric)
                    values = getattr(s, split) if s is not None else ()
                    cells.append(_fmt(float(values[-1])) if values else "-")
                if any(cell != "-" for cell in cells):
                    rows.append([metric, split, *cells])
        out += _table(["metric", "split", *columns], rows)
        out.append("")

        ok, violations = gini_ordering(ordered)
        out += ["## Loss inequality", ""]
        out.append(f"Final train-loss Gini decreases with noise: {'yes' if ok else 'no'}")
        out += [f"- violation: {v}" for v in violations]
        out.append("")

    if any(run.curves for run in ordered):
        out += ["## Score curves", ""]
        rows = []
        for run in ordered:
            for split, curve in sorted(run.curves.items()):
                rows.append([_percent(run.rate), split, _fmt(float(curve.median)), curve_shape(curve)])
        out += _table(["rate", "split", "median", "shape"], rows)
        out.append("")

    if any(run.csr for run in ordered):
        out += ["## Critical sample ratio", ""]
        rows = [
            [_percent(run.rate), "final" if r.epoch is None else str(r.epoch), _fmt(r.ratio),
             str(r.critical_count), str(r.test_size), str(r.queries_issued)]
            for run in ordered
            for r in run.csr
        ]
        out += _table(["rate", "epoch", "csr", "critical", "test size", "queries"], rows)
        out.append("")

    if files:
        out += ["## Files", ""]
        out += [f"- {f}" for f in sorted(files)]
        out.append("")
    return "\n".join(out)
