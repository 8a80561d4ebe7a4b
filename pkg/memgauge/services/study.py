#services/study.py

"""End-to-end study: noise, train, analyze and report for every noise rate.

Directory layout (version 1)::

    <out>/study.json                 manifest as run
    <out>/rate-XXX/corpus.jsonl      noisy training corpus
    <out>/rate-XXX/corpus.manifest.json
    <out>/rate-XXX/model.json        trained reference model
    <out>/rate-XXX/trace.jsonl       telemetry
    <out>/rate-XXX/metrics.csv       per-epoch metric series
    <out>/rate-XXX/curves.csv        score curves
    <out>/rate-XXX/csr.csv           when CSR is enabled
    <out>/<metric>.csv|.svg          all rates together
    <out>/score_curves.csv|.svg
    <out>/csr.csv                    when CSR is enabled
    <out>/summary.md                 tables plus an index of every file above
    <out>/FAILED                     error records, only when a run failed

Nothing written here carries a timestamp, so rerunning a manifest rewrites
identical bytes.
"""

import json
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from memgauge.config import get_settings
from memgauge.errors import UnsupportedTask
from memgauge.models.metrics import MetricSeries, ScoreCurve
from memgauge.models.oracle import CsrReport
from memgauge.models.run import RateRun, RunStatus, StudyManifest, rate_label
from memgauge.models.telemetry import Split
from memgauge.services import criticality, noising, refmodel, report
from memgauge.services.corpus import load_corpus
from memgauge.services.metrics import score_curve, task_metrics
from memgauge.services.oracles import ModelOracle
from memgauge.services.study_queue import StudyQueue
from memgauge.services.telemetry import TraceWriter, read_trace
from memgauge.utils.error_handler import ErrorHandler

logger = logging.getLogger("memgauge")

LAYOUT_VERSION = 1
FAILED_MARKER = "FAILED"


@dataclass
class StudyResult:
    directory: Path
    exit_code: int = 0
    runs: List[RateRun] = field(default_factory=list)
    summary_path: Optional[Path] = None
    error: Optional[dict] = None


def _resolve(path: str, base_dir: Optional[Path]) -> Path:
    candidate = Path(path)
    if base_dir is not None and not candidate.is_absolute():
        return base_dir / candidate
    return candidate


class _Pipeline:
    """Everything one noise rate needs, run inside a queue worker"""
    def __init__(self, manifest: StudyManifest, base, heldout, out_dir: Path, csr_workers: int):
        self.manifest = manifest
        self.base = base
        self.heldout = heldout
        self.out_dir = out_dir
        self.csr_workers = csr_workers

    def _csr(self, model, run: RateRun, epoch: Optional[int]) -> CsrReport:
        settings = self.manifest.csr
        return criticality.csr(
            self.heldout,
            ModelOracle(model),
            budget=settings.budget,
            workers=self.csr_workers,
            run_id=run.id,
            noise_rate=run.rate,
            epoch=epoch,
        )

    def __call__(self, run: RateRun) -> report.RunSummary:
        manifest = self.manifest
        rate_dir = self.out_dir / rate_label(run.rate)
        rate_dir.mkdir(parents=True, exist_ok=True)
        (rate_dir / FAILED_MARKER).unlink(missing_ok=True)

        run.stage = "noise"
        plan = noising.plan_noise(self.base, run.rate, manifest.noise_mode, manifest.noise_seed)
        noisy = noising.apply(self.base, plan)
        corpus_path, sidecar = noising.write_noisy_corpus(noisy, plan, rate_dir / "corpus.jsonl")
        run.artifacts["corpus"] = corpus_path.name
        run.artifacts["corpus_manifest"] = sidecar.name

        run.stage = "train"
        hyper = manifest.hyper
        vocab = refmodel.build_vocab(noisy, hyper.min_count)
        classes = refmodel.class_catalogue(manifest.task, noisy, self.heldout)
        model = refmodel.init_model(vocab, classes, hyper.dim, hyper.seed)
        csr_reports: List[CsrReport] = []

        def per_epoch_csr(epoch: int, current) -> None:
            csr_reports.append(self._csr(current, run, epoch))

        callback = per_epoch_csr if manifest.csr.enabled and manifest.csr.per_epoch else None
        with TraceWriter(rate_dir / "trace.jsonl") as sink:
            model = refmodel.train(
                model, noisy, self.heldout, hyper, sink,
                run_id=run.id, noise_rate=run.rate, noise_mode=manifest.noise_mode.value,
                on_epoch_end=callback,
            )
        refmodel.save_checkpoint(model, rate_dir / "model.json")
        run.artifacts["trace"] = "trace.jsonl"
        run.artifacts["model"] = "model.json"

        run.stage = "analyze"
        trace = read_trace(rate_dir / "trace.jsonl")
        series = task_metrics(trace, manifest.task)
        curves = {split.value: score_curve(trace, split) for split in trace.splits()}
        if manifest.csr.enabled and not manifest.csr.per_epoch:
            run.stage = "csr"
            csr_reports.append(self._csr(model, run, None))
        if csr_reports and manifest.csr.per_epoch:
            series["csr"] = MetricSeries(
                run_id=run.id, metric="csr", noise_rate=run.rate, noise_mode=manifest.noise_mode.value,
                heldout=tuple(r.ratio for r in csr_reports),
            )

        run.stage = "report"
        report.emit_csv([series[name] for name in sorted(series)], rate_dir / "metrics.csv")
        report.emit_csv([curves[name] for name in sorted(curves)], rate_dir / "curves.csv", ScoreCurve)
        run.artifacts["metrics"] = "metrics.csv"
        run.artifacts["curves"] = "curves.csv"
        if csr_reports:
            report.emit_csv(csr_reports, rate_dir / "csr.csv", CsrReport)
            run.artifacts["csr"] = "csr.csv"
        else:
            (rate_dir / "csr.csv").unlink(missing_ok=True)
        run.stage = "done"
        return report.RunSummary(
            rate=run.rate, run_id=run.id, series=series, curves=curves, csr=tuple(csr_reports),
        )


def _write_failed(out_dir: Path, records: List[dict]) -> None:
    text = "\n".join(json.dumps(r, sort_keys=True) for r in records) + "\n"
    (out_dir / FAILED_MARKER).write_text(text, encoding="utf-8")


def _clear_stale(out_dir: Path, manifest: StudyManifest) -> None:
    """Drop outputs of an earlier study in the same directory that this manifest will not rewrite."""
    kept = {rate_label(rate) for rate in manifest.rates}
    for rate_dir in sorted(out_dir.glob("rate-*")):
        if rate_dir.is_dir() and rate_dir.name not in kept:
            logger.warning(f"Removing stale {rate_dir}")
            shutil.rmtree(rate_dir)
    if not manifest.csr.enabled:
        (out_dir / "csr.csv").unlink(missing_ok=True)
    if not (manifest.csr.enabled and manifest.csr.per_epoch):
        (out_dir / "csr.svg").unlink(missing_ok=True)


def _combined_outputs(out_dir: Path, summaries: List[report.RunSummary], manifest: StudyManifest) -> None:
    metrics = sorted({name for s in summaries for name in s.series})
    for metric in metrics:
        collection = [s.series[metric] for s in summaries if metric in s.series]
        report.emit_csv(collection, out_dir / f"{metric}.csv")
        report.emit_plot(collection, "trajectory", out_dir / f"{metric}.svg", title=f"{manifest.name}: {metric}")

    curves = [s.curves[Split.HELDOUT.value] for s in summaries if Split.HELDOUT.value in s.curves]
    report.emit_csv(curves, out_dir / "score_curves.csv", ScoreCurve)
    if curves:
        report.emit_plot(curves, "curve", out_dir / "score_curves.svg", title=f"{manifest.name}: heldout score curves")

    reports = [r for s in summaries for r in s.csr]
    if manifest.csr.enabled:
        report.emit_csv(reports, out_dir / "csr.csv", CsrReport)


def run_study(
    manifest: StudyManifest,
    out_dir,
    base_dir: Optional[Path] = None,
    workers: Optional[int] = None,
) -> StudyResult:
    """Run every noise-rate pipeline of a manifest and write the study directory.

    Failures never raise: the result carries the exit code and the error
    record, and a FAILED marker is left next to the partial outputs.
    """
    out_dir = Path(out_dir)
    result = StudyResult(directory=out_dir)
    settings = get_settings()

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / FAILED_MARKER).unlink(missing_ok=True)
        _clear_stale(out_dir, manifest)
        if manifest.task not in refmodel.TRAINABLE_TASKS:
            raise UnsupportedTask(manifest.task.value, "run-study")
        (out_dir / "study.json").write_text(
            json.dumps({"layout_version": LAYOUT_VERSION, **manifest.model_dump(mode="json")}, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        base = load_corpus(_resolve(manifest.base_corpus, base_dir), manifest.task)
        heldout = load_corpus(_resolve(manifest.heldout_corpus, base_dir), manifest.task)
    except Exception as e:
        ErrorHandler.log_error(e, "study setup")
        result.error = ErrorHandler.error_record(e, stage="load")
        result.exit_code = result.error["exit_code"]
        if out_dir.is_dir():
            _write_failed(out_dir, [result.error])
        return result

    slots = workers or manifest.workers or settings.worker_count(len(manifest.rates))
    slots = max(1, min(slots, len(manifest.rates)))
    pipeline = _Pipeline(manifest, base, heldout, out_dir, csr_workers=manifest.csr.workers)
    queue = StudyQueue(pipeline, max_concurrent_jobs=slots)
    for rate in manifest.rates:
        queue.add_run(RateRun(manifest, rate))
    logger.info(f"Study {manifest.name}: {len(manifest.rates)} rates on {slots} worker slot(s)")
    result.runs = queue.run_all()

    failed = [run for run in result.runs if run.status is RunStatus.FAILED]
    if failed:
        for run in failed:
            rate_dir = out_dir / rate_label(run.rate)
            if rate_dir.is_dir():
                _write_failed(rate_dir, [run.error_record])
        _write_failed(out_dir, [run.error_record for run in failed])
        result.error = failed[0].error_record
        result.exit_code = result.error["exit_code"]
        logger.error(f"Study {manifest.name}: {len(failed)} of {len(result.runs)} runs failed")
        return result

    summaries = [queue.results[run.id] for run in result.runs]
    try:
        _combined_outputs(out_dir, summaries, manifest)
        summary_path = out_dir / "summary.md"
        files = sorted({
            path.relative_to(out_dir).as_posix()
            for path in out_dir.rglob("*")
            if path.is_file() and path.name != FAILED_MARKER
        } | {"summary.md"})
        header = {
            "task": manifest.task.value,
            "noise mode": manifest.noise_mode.value,
            "noise seed": str(manifest.noise_seed),
            "model": f"dim {manifest.hyper.dim}, {manifest.hyper.epochs} epochs, lr {manifest.hyper.learning_rate:g}",
            "layout version": str(LAYOUT_VERSION),
        }
        text = report.study_summary(manifest.name, manifest.rates, summaries, files=files, header=header)
        summary_path.write_text(text, encoding="utf-8")
        result.summary_path = summary_path
    except Exception as e:
        ErrorHandler.log_error(e, "study report")
        result.error = ErrorHandler.error_record(e, stage="report")
        result.exit_code = result.error["exit_code"]
        _write_failed(out_dir, [result.error])
        return result

    logger.info(f"Study {manifest.name} written to {out_dir}")
    return result
