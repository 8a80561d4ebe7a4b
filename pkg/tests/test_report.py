import csv

import pytest

from memgauge.errors import EmptyInput, HeterogeneousArtifacts, MissingRun, TooManySeries
from memgauge.models.metrics import MetricSeries, ScoreCurve
from memgauge.models.oracle import CsrReport
from memgauge.services import report

RATES = (0.0, 0.25, 0.5, 0.75, 1.0)


def f1_series(rate, train=(0.2, 0.5, 0.9), heldout=(0.2, 0.4, 0.35)):
    return MetricSeries(
        run_id=f"study-rate-{round(rate * 100):03d}", metric="f1", noise_rate=rate,
        noise_mode="label_swap", train=train, heldout=heldout,
    )


def gini_series(rate, final):
    return MetricSeries(run_id=f"r{rate}", metric="gini", noise_rate=rate, train=(0.9, final), heldout=(0.5, 0.5))


def read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.reader(handle))


def test_series_csv_rows_and_header(tmp_path):
    path = report.emit_csv([f1_series(0.5), f1_series(0.0)], tmp_path / "f1.csv")
    rows = read_rows(path)
    assert tuple(rows[0]) == report.SERIES_COLUMNS
    assert len(rows) == 7
    assert [row[2] for row in rows[1:]] == ["0", "0", "0", "0.5", "0.5", "0.5"]
    assert [row[4] for row in rows[1:4]] == ["0", "1", "2"]


def test_empty_collection_writes_header_only(tmp_path):
    path = report.emit_csv([], tmp_path / "empty.csv", ScoreCurve)
    assert read_rows(path) == [list(report.CURVE_COLUMNS)]


def test_csv_is_byte_stable_and_round_trips(tmp_path):
    series = [MetricSeries(run_id="r", metric="loss", noise_rate=0.25, train=(1 / 3, 2 / 3), heldout=(0.1, 0.2))]
    first = report.emit_csv(series, tmp_path / "a.csv")
    second = report.emit_csv(series, tmp_path / "b.csv")
    assert first.read_bytes() == second.read_bytes()
    loaded = report.load_metric_csv(first)
    assert len(loaded) == 1
    assert loaded[0].train == pytest.approx(series[0].train, rel=5e-9)
    assert loaded[0].heldout == pytest.approx(series[0].heldout, rel=5e-9)


def test_csv_rejects_mixed_artifacts(tmp_path):
    with pytest.raises(HeterogeneousArtifacts):
        report.emit_csv([f1_series(0.0), ScoreCurve(values=(0.5,))], tmp_path / "mixed.csv")


def test_csr_csv(tmp_path):
    result = CsrReport(run_id="r", noise_rate=1.0, test_size=4, critical_ids=("a",), queries_issued=9)
    rows = read_rows(report.emit_csv([result], tmp_path / "csr.csv"))
    assert rows[1][rows[0].index("ratio")] == "0.25"
    assert rows[1][rows[0].index("epoch")] == ""


def test_trajectory_plot_conventions():
    svg = report.render_svg([f1_series(rate) for rate in RATES], "trajectory", title="F1")
    assert svg.startswith("<svg")
    assert svg.rstrip().endswith("</svg>")
    assert svg.count("<polyline") == 10
    assert svg.count("stroke-dasharray") == 5
    for color in report.RATE_COLORS.values():
        assert color in svg
    assert "epoch" in svg and "f1" in svg


def test_constant_series_is_horizontal():
    svg = report.render_svg([f1_series(0.0, train=(0.4, 0.4, 0.4), heldout=())], "trajectory")
    points = svg.split('points="')[1].split('"')[0].split()
    assert len({point.split(",")[1] for point in points}) == 1


def test_plot_errors():
    with pytest.raises(EmptyInput):
        report.render_svg([], "trajectory")
    many = [f1_series(rate) for rate in (0.0, 0.1, 0.2, 0.3, 0.4, 0.6)]
    with pytest.raises(TooManySeries):
        report.render_svg(many, "trajectory")


def test_curve_plot_and_escaping(tmp_path):
    curves = [ScoreCurve(noise_rate=rate, values=(0.9, 0.5, 0.1)) for rate in (0.0, 1.0)]
    path = report.emit_plot(curves, "curve", tmp_path / "curves.svg", title="a & <b>")
    svg = path.read_text()
    assert "sample rank" in svg
    assert "&amp;" in svg and "&lt;b&gt;" in svg
    assert "<b>" not in svg
    assert svg == report.render_svg(curves, "curve", title="a & <b>")


def _runs(rates=RATES):
    runs = []
    for position, rate in enumerate(rates):
        runs.append(report.RunSummary(
            rate=rate,
            run_id=f"r{position}",
            series={"f1": f1_series(rate), "gini": gini_series(rate, 0.8 - 0.1 * position)},
            curves={"heldout": ScoreCurve(noise_rate=rate, values=(0.9, 0.6, 0.2))},
        ))
    return runs


def test_study_summary_tables():
    text = report.study_summary("demo", RATES, _runs(), files=["summary.md", "f1.csv"])
    assert text.startswith("# Study demo")
    header = next(line for line in text.splitlines() if line.startswith("| metric | split"))
    assert header.count("%") == 5
    assert "Final train-loss Gini decreases with noise: yes" in text
    assert "- f1.csv" in text
    assert text == report.study_summary("demo", RATES, _runs(), files=["summary.md", "f1.csv"])


def test_gini_ordering_violations():
    runs = _runs()
    runs[2].series["gini"] = gini_series(0.5, 0.95)
    ok, violations = report.gini_ordering(runs)
    assert not ok
    assert len(violations) == 1


def test_study_summary_missing_rate():
    runs = [run for run in _runs() if run.rate != 0.75]
    with pytest.raises(MissingRun) as info:
        report.study_summary("demo", RATES, runs)
    assert info.value.rate == 0.75
