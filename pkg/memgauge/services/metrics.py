#services/metrics.py

"""Per-sample scores, task metrics, losses and loss-distribution aggregates."""

import logging
import math
from collections import Counter
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from memgauge.errors import (
    EmptyName,
    EmptyReference,
    EmptySequence,
    EmptySlice,
    EmptySplit,
    IndexOutOfBounds,
    InvariantViolation,
    NegativeLoss,
    NoBuggySamples,
    NonFiniteInput,
    OverlappingOccurrences,
    UnsupportedTask,
)
from memgauge.models.metrics import BleuBreakdown, F1Score, LocRepAccuracy, MetricSeries, ScoreCurve
from memgauge.models.sample import Task
from memgauge.models.telemetry import RunTrace, Split, TelemetryRecord
from memgauge.utils.subtokens import split_subtokens

logger = logging.getLogger("memgauge")

PROB_EPSILON = 1e-12
REPAIR_THRESHOLD = 0.5
BLEU_ORDER = 4


def _as_array(values: Sequence[float]) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    if array.size == 0:
        raise EmptySequence("expected a non-empty sequence")
    if not np.all(np.isfinite(array)):
        raise NonFiniteInput("values must be finite")
    return array


# ---------------------------------------------------------------------------
# scores

def softmax_probs(logits: Sequence[float]) -> np.ndarray:
    """Max-subtracted softmax."""
    z = _as_array(logits)
    z = np.exp(z - z.max())
    return z / z.sum()


def localization_probs(loc_logits: Sequence[float]) -> np.ndarray:
    return softmax_probs(loc_logits)


def avg_sequence_score(token_probs: Sequence[float]) -> float:
    """Mean per-token probability of a generated sequence (end marker excluded)."""
    return math.fsum(_as_array(token_probs)) / len(token_probs)


def repair_probability(token_probs: Sequence[float], occurrence_sets: Mapping[str, Iterable[int]]) -> Dict[str, float]:
    """Pointer mass of each candidate variable, summed over its occurrences."""
    probs = _as_array(token_probs)
    owner: Dict[int, str] = {}
    result = {}
    for candidate, indices in occurrence_sets.items():
        indices = list(indices)
        for index in indices:
            if not 0 <= index < probs.size:
                raise IndexOutOfBounds(f"occurrence {index} of '{candidate}' outside [0, {probs.size})")
            if index in owner:
                raise OverlappingOccurrences(f"index {index} claimed by '{owner[index]}' and '{candidate}'")
            owner[index] = candidate
        result[candidate] = math.fsum(float(probs[i]) for i in indices)
    return result


# ---------------------------------------------------------------------------
# task metrics

def _f1_from_counts(tp: int, fp: int, fn: int) -> F1Score:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return F1Score(
        precision=precision, recall=recall, f1=f1,
        true_positives=tp, false_positives=fp, false_negatives=fn,
    )


def _subtoken_counts(predicted_name: str, actual_name: str) -> Tuple[int, int, int]:
    if not predicted_name or not actual_name:
        raise EmptyName("method names must be non-empty")
    predicted = Counter(split_subtokens(predicted_name))
    actual = Counter(split_subtokens(actual_name))
    tp = sum((predicted & actual).values())
    return tp, sum(predicted.values()) - tp, sum(actual.values()) - tp


def subtoken_f1(predicted_name: str, actual_name: str) -> F1Score:
    """Multiset sub-token precision, recall and F1 of one predicted name."""
    return _f1_from_counts(*_subtoken_counts(predicted_name, actual_name))


def corpus_f1(pairs: Iterable[Tuple[str, str]], average: str = "micro") -> F1Score:
    """Sub-token F1 over many (predicted, actual) pairs.

    ``micro`` pools tp/fp/fn over all pairs; ``macro`` averages per-pair scores.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptySlice("no predictions to score")
    counts = [_subtoken_counts(predicted, actual) for predicted, actual in pairs]
    if average == "micro":
        return _f1_from_counts(*(sum(column) for column in zip(*counts)))
    if average == "macro":
        scores = [_f1_from_counts(*c) for c in counts]
        tp, fp, fn = (sum(column) for column in zip(*counts))
        return F1Score(
            precision=math.fsum(s.precision for s in scores) / len(scores),
            recall=math.fsum(s.recall for s in scores) / len(scores),
            f1=math.fsum(s.f1 for s in scores) / len(scores),
            true_positives=tp, false_positives=fp, false_negatives=fn,
        )
    raise ValueError(f"unknown F1 average '{average}'")


def localization_repair_accuracy(records: Sequence[TelemetryRecord]) -> LocRepAccuracy:
    """Localization and repair accuracy over the buggy samples of an epoch slice.

    A sample counts as buggy when its target location is not "0". Repair is
    correct when at least half of the pointer mass sits on the right variable.
    """
    buggy = [record for record in records if str(record.target) != "0"]
    if not buggy:
        raise NoBuggySamples("slice contains no buggy samples")
    located = sum(1 for record in buggy if str(record.predicted) == str(record.target))
    repaired = 0
    for record in buggy:
        if record.repair_mass is None:
            raise InvariantViolation(f"buggy record '{record.sample_id}' carries no repair_mass")
        if record.repair_mass >= REPAIR_THRESHOLD:
            repaired += 1
    return LocRepAccuracy(loc_acc=located / len(buggy), rep_acc=repaired / len(buggy), buggy_count=len(buggy))


def balanced_accuracy(records: Sequence[TelemetryRecord]) -> float:
    if not records:
        raise EmptySlice("no code_search records to score")
    for record in records:
        if record.predicted not in ("0", "1") or record.target not in ("0", "1"):
            raise InvariantViolation(f"record '{record.sample_id}' has a non-binary label")
    return sum(1 for record in records if record.correct) / len(records)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def smoothed_bleu4(candidate: Sequence[str], reference: Sequence[str]) -> BleuBreakdown:
    """BLEU-4 with add-one smoothing on the 2- to 4-gram precisions."""
    candidate = list(candidate)
    reference = list(reference)
    if not reference:
        raise EmptyReference("reference docstring is empty")

    precisions = []
    for n in range(1, BLEU_ORDER + 1):
        cand_grams = _ngrams(candidate, n)
        clipped = sum((cand_grams & _ngrams(reference, n)).values())
        total = sum(cand_grams.values())
        if n == 1:
            precisions.append(clipped / total if total else 0.0)
        else:
            precisions.append((clipped + 1) / (total + 1))

    bp = math.exp(min(0.0, 1.0 - len(reference) / max(len(candidate), 1)))
    if not candidate or precisions[0] == 0.0:
        score = 0.0
    else:
        score = bp * math.exp(math.fsum(math.log(p) for p in precisions) / BLEU_ORDER)
    return BleuBreakdown(bp=bp, precisions=tuple(precisions), score=min(score, 1.0))


# ---------------------------------------------------------------------------
# losses

def cross_entropy(actual_index: int, probs: Sequence[float]) -> float:
    probs = _as_array(probs)
    if not 0 <= actual_index < probs.size:
        raise IndexOutOfBounds(f"class {actual_index} outside [0, {probs.size})")
    return -math.log(max(float(probs[actual_index]), PROB_EPSILON))


def binary_cross_entropy(y: int, p: float) -> float:
    positive = -math.log(max(p, PROB_EPSILON))
    negative = -math.log(max(1.0 - p, PROB_EPSILON))
    return positive if y else negative


def avg_sequence_loss(token_probs: Sequence[float]) -> float:
    """Mean per-token negative log-likelihood of the reference sequence."""
    probs = _as_array(token_probs)
    return math.fsum(-math.log(max(float(p), PROB_EPSILON)) for p in probs) / probs.size


def varmisuse_loss(loc_probs: Sequence[float], bug_location: int, rep_mass: Optional[float] = None) -> Tuple[float, float, float]:
    """(localization loss, repair loss, total); bug-free samples have no repair loss."""
    loc_loss = cross_entropy(bug_location, loc_probs)
    if bug_location == 0:
        rep_loss = 0.0
    else:
        rep_loss = -math.log(max(rep_mass if rep_mass is not None else 0.0, PROB_EPSILON))
    return loc_loss, rep_loss, loc_loss + rep_loss


# ---------------------------------------------------------------------------
# loss inequality and confidence

def gini(losses: Sequence[float]) -> float:
    """Gini coefficient via the sorted formulation; 0 for an all-zero vector."""
    values = _as_array(losses)
    if np.any(values < 0):
        raise NegativeLoss("losses must be non-negative")
    total = math.fsum(values)
    if total == 0.0:
        return 0.0
    n = values.size
    ordered = np.sort(values)
    weights = 2.0 * np.arange(1, n + 1) - n - 1
    return math.fsum(weights * ordered) / (n * total)


def gini_trajectory(trace: RunTrace) -> MetricSeries:
    if trace.epoch_count == 0:
        raise EmptySplit("trace has no epochs")
    per_split = {
        split: tuple(gini([r.loss for r in trace.records(epoch, split)]) for epoch in range(trace.epoch_count))
        for split in trace.splits()
    }
    return MetricSeries(
        run_id=trace.run_id,
        metric="gini",
        noise_rate=trace.noise_rate,
        noise_mode=trace.noise_mode,
        train=per_split.get(Split.TRAIN, ()),
        heldout=per_split.get(Split.HELDOUT, ()),
    )


def score_curve(trace: RunTrace, split=Split.HELDOUT) -> ScoreCurve:
    """Per-sample mean score over all epochs, sorted descending."""
    split = Split(split)
    if trace.epoch_count == 0 or split not in trace.universe:
        raise EmptySplit(f"trace has no {split.value} records")
    scores: Dict[str, List[float]] = {}
    for epoch in range(trace.epoch_count):
        for record in trace.records(epoch, split):
            scores.setdefault(record.sample_id, []).append(record.score)
    means = sorted((math.fsum(v) / len(v) for v in scores.values()), reverse=True)
    return ScoreCurve(
        run_id=trace.run_id,
        noise_rate=trace.noise_rate,
        noise_mode=trace.noise_mode,
        split=split.value,
        values=tuple(min(1.0, max(0.0, m)) for m in means),
    )


def curve_shape(curve: ScoreCurve, tolerance: float = 0.02) -> str:
    """Classify a score curve as concave, convex or linear.

    Compares the area under the curve (rank axis scaled to [0, 1]) with the
    area under the chord joining its endpoints.
    """
    values = np.asarray(curve.values, dtype=np.float64)
    if values.size < 3:
        return "linear"
    area = float((values[:-1] + values[1:]).sum()) / (2 * (values.size - 1))
    chord = (values[0] + values[-1]) / 2
    if area > chord + tolerance:
        return "concave"
    if area < chord - tolerance:
        return "convex"
    return "linear"


# ---------------------------------------------------------------------------
# per-task dispatch

def _as_tokens(value) -> List[str]:
    return value.split() if isinstance(value, str) else list(value)


def _epoch_metrics(records: Sequence[TelemetryRecord], task: Task, f1_average: str) -> Dict[str, float]:
    if task is Task.METHOD_NAME:
        pairs = [(str(r.predicted), str(r.target)) for r in records]
        return {
            "f1": corpus_f1(pairs, f1_average).f1,
            "accuracy": sum(1 for r in records if r.correct) / len(records),
        }
    if task is Task.VAR_MISUSE:
        accuracy = localization_repair_accuracy(records)
        return {"loc_acc": accuracy.loc_acc, "rep_acc": accuracy.rep_acc}
    if task is Task.CODE_SEARCH:
        return {"balanced_accuracy": balanced_accuracy(records)}
    if task is Task.CODE_TO_TEXT:
        scores = [smoothed_bleu4(_as_tokens(r.predicted), _as_tokens(r.target)).score for r in records]
        return {"bleu": math.fsum(scores) / len(scores)}
    raise UnsupportedTask(task, "task_metrics")


def task_metrics(trace: RunTrace, task: Task, f1_average: str = "micro") -> Dict[str, MetricSeries]:
    """Every per-epoch series appropriate to the task, plus the Gini trajectory."""
    task = Task(task)
    if trace.epoch_count == 0:
        raise EmptySplit("trace has no epochs")

    values: Dict[str, Dict[Split, List[float]]] = {}
    for split in trace.splits():
        for epoch in range(trace.epoch_count):
            for name, value in _epoch_metrics(trace.records(epoch, split), task, f1_average).items():
                values.setdefault(name, {}).setdefault(split, []).append(value)

    series = {
        name: MetricSeries(
            run_id=trace.run_id,
            metric=name,
            noise_rate=trace.noise_rate,
            noise_mode=trace.noise_mode,
            train=tuple(by_split.get(Split.TRAIN, ())),
            heldout=tuple(by_split.get(Split.HELDOUT, ())),
        )
        for name, by_split in values.items()
    }
    series["gini"] = gini_trajectory(trace)
    logger.debug(f"Computed {sorted(series)} for run {trace.run_id}")
    return series
