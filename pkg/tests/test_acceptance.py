"""Desk-scale memorization trends with the reference model.

These train on a 2,000-sample synthetic corpus and take minutes; run them
with ``pytest -m slow``.
"""
import time
from functools import lru_cache

import numpy as np
import pytest

from memgauge.models.noise import NoiseMode
from memgauge.models.run import Hyperparameters, StudyManifest
from memgauge.models.sample import Task
from memgauge.models.telemetry import Split
from memgauge.services import criticality, noising, refmodel
from memgauge.services.corpus import write_corpus
from memgauge.services.metrics import score_curve, task_metrics
from memgauge.services.oracles import ModelOracle
from memgauge.services.study import run_study
from memgauge.services.synthetic import synthetic_method_corpus
from memgauge.services.telemetry import MemorySink, build_trace

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2, 3, 4)


@lru_cache()
def corpora():
    train = synthetic_method_corpus(labels=10, per_label=200, vocab_size=500, seed=0)
    heldout = synthetic_method_corpus(labels=10, per_label=20, vocab_size=500, seed=1, prefix="held")
    return train, heldout


@lru_cache()
def trained(rate, dim, epochs, seed, batch_size=32):
    train, heldout = corpora()
    plan = noising.plan_noise(train, rate, NoiseMode.LABEL_SWAP, seed)
    noisy = noising.apply(train, plan)
    classes = refmodel.class_catalogue(Task.METHOD_NAME, noisy, heldout)
    model = refmodel.init_model(refmodel.build_vocab(noisy), classes, dim, seed)
    hyper = Hyperparameters(epochs=epochs, batch_size=batch_size, learning_rate=0.5, seed=seed, dim=dim)
    sink = MemorySink()
    model = refmodel.train(model, noisy, heldout, hyper, sink, run_id=f"r{seed}", noise_rate=rate)
    return model, build_trace(sink.records)


@lru_cache()
def metrics_of(rate, dim, epochs, seed, batch_size=32):
    return task_metrics(trained(rate, dim, epochs, seed, batch_size)[1], Task.METHOD_NAME)


def final(run, metric, split="train"):
    return getattr(metrics_of(*run)[metric], split)[-1]


def mostly(outcomes):
    return sum(outcomes) >= 4


def test_over_capacity_model_memorizes_random_labels():
    started = time.perf_counter()
    over = final((1.0, 128, 300, 0, 1), "accuracy")
    under = final((1.0, 2, 300, 0, 1), "accuracy")
    assert time.perf_counter() - started < 600
    assert over >= 0.99
    assert under <= 0.60


def test_loss_gini_decreases_with_noise():
    outcomes = []
    for seed in SEEDS:
        g = [final((rate, 8, 60, seed), "gini") for rate in (0.0, 0.5, 1.0)]
        outcomes.append(g[0] > g[1] > g[2])
    assert mostly(outcomes)


def test_heldout_f1_degrades_with_noise():
    outcomes = []
    for seed in SEEDS:
        f1 = [final((rate, 8, 60, seed), "f1", "heldout") for rate in (0.0, 0.5, 1.0)]
        outcomes.append(f1[0] >= f1[1] >= f1[2])
    assert mostly(outcomes)


def test_heldout_confidence_collapses_under_noise():
    outcomes = []
    for seed in SEEDS:
        clean = score_curve(trained(0.0, 8, 60, seed)[1], Split.HELDOUT)
        noisy = score_curve(trained(1.0, 8, 60, seed)[1], Split.HELDOUT)
        outcomes.append(np.median(noisy.values) < np.median(clean.values))
    assert mostly(outcomes)


def test_memorizing_model_is_more_critical():
    _, heldout = corpora()
    outcomes = []
    for seed in SEEDS:
        clean = criticality.csr(heldout, ModelOracle(trained(0.0, 128, 100, seed)[0]), budget=3)
        noisy = criticality.csr(heldout, ModelOracle(trained(1.0, 128, 100, seed)[0]), budget=3)
        outcomes.append(noisy.ratio >= clean.ratio)
    assert mostly(outcomes)


def test_full_study_is_reproducible(tmp_path):
    train, heldout = corpora()
    write_corpus(train, tmp_path / "train.jsonl")
    write_corpus(heldout, tmp_path / "heldout.jsonl")
    manifest = StudyManifest(
        name="desk",
        task=Task.METHOD_NAME,
        base_corpus="train.jsonl",
        heldout_corpus="heldout.jsonl",
        noise_mode=NoiseMode.LABEL_SWAP,
        hyper=Hyperparameters(epochs=20, dim=8, learning_rate=0.5),
    )
    out = tmp_path / "out"
    started = time.perf_counter()
    result = run_study(manifest, out, base_dir=tmp_path, workers=4)
    assert result.exit_code == 0
    assert time.perf_counter() - started < 900
    traces = sorted(out.glob("rate-*/trace.jsonl"))
    assert len(traces) == 5
    assert (out / "f1.svg").is_file() and (out / "summary.md").is_file()

    first = {p.relative_to(out): p.read_bytes() for p in out.rglob("*") if p.is_file()}
    run_study(manifest, out, base_dir=tmp_path, workers=4)
    assert {p.relative_to(out): p.read_bytes() for p in out.rglob("*") if p.is_file()} == first
