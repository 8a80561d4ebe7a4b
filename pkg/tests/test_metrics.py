import math

import numpy as np
import pytest

from memgauge.errors import (
    EmptyName,
    EmptyReference,
    EmptySequence,
    EmptySlice,
    EmptySplit,
    IndexOutOfBounds,
    NegativeLoss,
    NoBuggySamples,
    NonFiniteInput,
    OverlappingOccurrences,
)
from memgauge.models.metrics import ScoreCurve
from memgauge.models.sample import Task
from memgauge.models.telemetry import TelemetryRecord
from memgauge.services import metrics
from memgauge.services.telemetry import build_trace


def brute_force_gini(values):
    values = np.asarray(values, dtype=np.float64)
    total = values.sum()
    if total == 0:
        return 0.0
    return np.abs(values[:, None] - values[None, :]).sum() / (2 * values.size * total)


def rec(sample_id, epoch=0, split="train", loss=1.0, score=0.5, predicted="run", target="run", **extra):
    return TelemetryRecord(
        run_id="r", noise_rate=0.0, noise_mode="", epoch=epoch, split=split, sample_id=sample_id,
        loss=loss, predicted=predicted, score=score, correct=predicted == target, target=target, **extra,
    )


# scores

def test_softmax_examples():
    np.testing.assert_allclose(metrics.softmax_probs([0, 0]), [0.5, 0.5])
    np.testing.assert_allclose(metrics.softmax_probs([math.log(2), 0]), [2 / 3, 1 / 3], rtol=1e-12)
    big = metrics.softmax_probs([1000, 0])
    assert big[0] == pytest.approx(1.0)
    assert np.all(np.isfinite(big))


def test_softmax_translation_invariance():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=7)
    np.testing.assert_allclose(metrics.softmax_probs(logits), metrics.softmax_probs(logits + 123.0), atol=1e-12)
    assert np.argmax(metrics.softmax_probs(logits)) == np.argmax(logits)
    assert metrics.softmax_probs(logits).sum() == pytest.approx(1.0, abs=1e-12)


def test_softmax_rejects_bad_input():
    with pytest.raises(NonFiniteInput):
        metrics.softmax_probs([0.0, float("nan")])
    with pytest.raises(EmptySequence):
        metrics.softmax_probs([])


def test_avg_sequence_score():
    assert metrics.avg_sequence_score([0.5]) == 0.5
    assert metrics.avg_sequence_score([1.0, 0.0]) == 0.5
    assert metrics.avg_sequence_score([0.2, 0.3, 0.7]) == pytest.approx(0.4)
    with pytest.raises(EmptySequence):
        metrics.avg_sequence_score([])


def test_repair_probability():
    result = metrics.repair_probability([0.1, 0.2, 0.3, 0.4], {"A": {0, 3}, "B": {1}})
    assert result["A"] == pytest.approx(0.5)
    assert result["B"] == pytest.approx(0.2)
    assert metrics.repair_probability([0.25] * 4, {"A": range(4)})["A"] == pytest.approx(1.0)
    with pytest.raises(OverlappingOccurrences):
        metrics.repair_probability([0.5, 0.5], {"A": [0], "B": [0, 1]})
    with pytest.raises(IndexOutOfBounds):
        metrics.repair_probability([0.5, 0.5], {"A": [2]})


# task metrics

def test_subtoken_f1_examples():
    assert metrics.subtoken_f1("setUp", "setUp").f1 == 1.0
    score = metrics.subtoken_f1("getName", "setName")
    assert (score.precision, score.recall, score.f1) == (0.5, 0.5, 0.5)
    assert metrics.subtoken_f1("run", "equals").f1 == 0.0
    with pytest.raises(EmptyName):
        metrics.subtoken_f1("", "run")


def test_subtoken_f1_uses_multisets():
    score = metrics.subtoken_f1("getGetName", "getName")
    assert score.true_positives == 2
    assert score.false_positives == 1
    assert metrics.subtoken_f1("getName", "nameGet").f1 == 1.0
    assert metrics.subtoken_f1("a_b", "b_c").f1 == metrics.subtoken_f1("b_c", "a_b").f1


def test_corpus_f1_micro_and_macro():
    pairs = [("getName", "getName"), ("run", "stop")]
    assert metrics.corpus_f1(pairs, "micro").f1 == pytest.approx(2 / 3)
    assert metrics.corpus_f1(pairs, "macro").f1 == pytest.approx(0.5)
    with pytest.raises(EmptySlice):
        metrics.corpus_f1([])


def test_localization_repair_accuracy():
    records = [
        rec("a", predicted="5", target="5", repair_mass=0.5),
        rec("b", predicted="2", target="7", repair_mass=0.4),
        rec("c", predicted="0", target="0"),
    ]
    accuracy = metrics.localization_repair_accuracy(records)
    assert accuracy.loc_acc == 0.5
    assert accuracy.rep_acc == 0.5
    assert accuracy.buggy_count == 2
    with pytest.raises(NoBuggySamples):
        metrics.localization_repair_accuracy([rec("c", predicted="0", target="0")])


def test_balanced_accuracy():
    assert metrics.balanced_accuracy([rec("a", predicted="1", target="1"), rec("b", predicted="0", target="0")]) == 1.0
    constant = [rec(f"s{i}", predicted="1", target=str(i % 2)) for i in range(4)]
    assert metrics.balanced_accuracy(constant) == 0.5
    three = [rec("a", predicted="1", target="1"), rec("b", predicted="1", target="1"),
             rec("c", predicted="0", target="0"), rec("d", predicted="0", target="1")]
    assert metrics.balanced_accuracy(three) == 0.75
    with pytest.raises(EmptySlice):
        metrics.balanced_accuracy([])


def test_smoothed_bleu4():
    sentence = ["returns", "the", "sum", "of", "numbers"]
    assert metrics.smoothed_bleu4(sentence, sentence).score == 1.0
    assert metrics.smoothed_bleu4(["x", "y"], sentence).score == 0.0
    assert metrics.smoothed_bleu4([], sentence).score == 0.0

    short = metrics.smoothed_bleu4(["a", "b"], ["a", "b", "c", "d"])
    assert short.bp == pytest.approx(math.exp(-1), abs=1e-12)
    assert short.precisions == (1.0, 1.0, 1.0, 1.0)
    assert short.score == pytest.approx(0.36787944117144233, abs=1e-9)
    with pytest.raises(EmptyReference):
        metrics.smoothed_bleu4(["a"], [])


# losses

def test_cross_entropy():
    assert metrics.cross_entropy(0, [1.0, 0.0]) == 0.0
    assert metrics.cross_entropy(3, [0.1] * 10) == pytest.approx(2.302585, abs=1e-6)
    assert metrics.cross_entropy(1, [1.0, 0.0]) == pytest.approx(27.631, abs=1e-3)
    with pytest.raises(IndexOutOfBounds):
        metrics.cross_entropy(2, [0.5, 0.5])


def test_binary_cross_entropy():
    assert metrics.binary_cross_entropy(1, 1.0) == 0.0
    assert metrics.binary_cross_entropy(0, 0.5) == pytest.approx(0.693147, abs=1e-6)
    assert metrics.binary_cross_entropy(1, 0.0) == pytest.approx(27.631, abs=1e-3)


def test_sequence_and_varmisuse_losses():
    assert metrics.avg_sequence_loss([1.0, 1.0]) == 0.0
    assert metrics.avg_sequence_loss([0.5]) == pytest.approx(math.log(2))
    loc, rep, total = metrics.varmisuse_loss([0.5, 0.5], 1, rep_mass=0.25)
    assert loc == pytest.approx(math.log(2))
    assert rep == pytest.approx(math.log(4))
    assert total == pytest.approx(loc + rep)
    assert metrics.varmisuse_loss([0.5, 0.5], 0)[1] == 0.0


# gini

def test_gini_examples():
    assert metrics.gini([2.0, 2.0, 2.0]) == 0.0
    assert metrics.gini([0, 0, 1]) == pytest.approx(2 / 3, abs=1e-15)
    assert metrics.gini([0, 0, 0]) == 0.0
    with pytest.raises(NegativeLoss):
        metrics.gini([1.0, -1.0])
    with pytest.raises(EmptySequence):
        metrics.gini([])


def test_gini_matches_brute_force_on_random_vectors():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        values = rng.exponential(size=int(rng.integers(1, 501)))
        expected = brute_force_gini(values)
        assert metrics.gini(values) == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_gini_is_scale_and_permutation_invariant():
    rng = np.random.default_rng(5)
    values = rng.exponential(size=50)
    base = metrics.gini(values)
    assert metrics.gini(values * 3.0) == pytest.approx(base, rel=1e-12)
    assert metrics.gini(rng.permutation(values)) == pytest.approx(base, rel=1e-12)
    assert 0.0 <= base <= 1 - 1 / values.size


def test_gini_trajectory():
    records = [rec(f"s{i}", epoch=0, loss=loss) for i, loss in enumerate([0, 0, 1])]
    records += [rec(f"s{i}", epoch=1, loss=1.0) for i in range(3)]
    series = metrics.gini_trajectory(build_trace(records))
    assert series.train == pytest.approx((2 / 3, 0.0))
    scaled = [r.model_copy(update={"loss": r.loss * 3}) for r in records]
    assert metrics.gini_trajectory(build_trace(scaled)).train == pytest.approx(series.train)


# curves

def test_score_curve():
    single = build_trace([rec("a", epoch=0, split="heldout", score=0.2), rec("a", epoch=1, split="heldout", score=0.4)])
    assert metrics.score_curve(single).values == pytest.approx((0.3,))

    records = [rec(sid, split="heldout", score=s) for sid, s in (("a", 0.9), ("b", 0.1), ("c", 0.5))]
    curve = metrics.score_curve(build_trace(records))
    assert curve.values == (0.9, 0.5, 0.1)
    assert metrics.score_curve(build_trace(list(reversed(records)))) == curve
    with pytest.raises(EmptySplit):
        metrics.score_curve(build_trace(records), "train")


def test_curve_shape():
    assert metrics.curve_shape(ScoreCurve(values=(1.0, 0.95, 0.9, 0.1))) == "concave"
    assert metrics.curve_shape(ScoreCurve(values=(1.0, 0.1, 0.05, 0.0))) == "convex"
    assert metrics.curve_shape(ScoreCurve(values=(1.0, 0.5, 0.0))) == "linear"


def test_task_metrics_for_method_name():
    records = [
        rec("a", epoch=0, predicted="getName", target="getName", loss=0.1),
        rec("b", epoch=0, predicted="run", target="stop", loss=2.0),
        rec("a", epoch=0, split="heldout", predicted="run", target="run", loss=0.5),
    ]
    series = metrics.task_metrics(build_trace(records), Task.METHOD_NAME)
    assert set(series) == {"f1", "accuracy", "gini"}
    assert series["accuracy"].train == (0.5,)
    assert series["accuracy"].heldout == (1.0,)
    assert series["f1"].train == pytest.approx((2 / 3,))
