#services/refmodel.py

"""Bag-of-sub-tokens linear softmax classifier.

The code vector is the mean embedding of a sample's input sub-tokens
(PAD when there are none); class logits are its dot products with the
output weight rows. Capacity is the embedding width ``dim``. Only the
method_name and code_search schemas are trainable; code_search samples are
featurized from code and query sub-tokens together.
"""

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from memgauge.errors import (
    DivergedLoss,
    EmptyCorpus,
    IndexOutOfVocab,
    IoFailure,
    SchemaViolation,
    UnsupportedTask,
)
from memgauge.models.oracle import LabelPrediction
from memgauge.models.run import Hyperparameters
from memgauge.models.sample import Corpus, Sample, Task
from memgauge.models.telemetry import Split, TelemetryRecord
from memgauge.services.metrics import PROB_EPSILON
from memgauge.services.telemetry import append
from memgauge.utils.rng import make_rng
from memgauge.utils.subtokens import split_subtokens

logger = logging.getLogger("memgauge")

UNK = 0
PAD = 1
SPECIAL_TOKENS = ("<unk>", "<pad>")
INIT_SCALE = 0.05
CHECKPOINT_FORMAT = "memgauge-refmodel"
CHECKPOINT_VERSION = 1
TRAINABLE_TASKS = (Task.METHOD_NAME, Task.CODE_SEARCH)


@dataclass(frozen=True)
class Vocab:
    """Sub-token vocabulary with UNK = 0 and PAD = 1"""
    itos: Tuple[str, ...]
    min_count: int = 1
    stoi: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "stoi", {token: index for index, token in enumerate(self.itos)})

    def __len__(self) -> int:
        return len(self.itos)

    def lookup(self, subtoken: str) -> int:
        return self.stoi.get(subtoken, UNK)


@dataclass
class RefModel:
    vocab: Vocab
    classes: Tuple[str, ...]
    dim: int
    seed: int
    embeddings: np.ndarray
    weights: np.ndarray
    hyper: Optional[Hyperparameters] = None

    @property
    def parameter_count(self) -> int:
        return self.dim * (len(self.vocab) + len(self.classes))

    @property
    def class_index(self) -> Dict[str, int]:
        return {label: index for index, label in enumerate(self.classes)}

    def copy(self) -> "RefModel":
        return replace(self, embeddings=self.embeddings.copy(), weights=self.weights.copy())


def _input_tokens(sample: Sample) -> Tuple[str, ...]:
    if sample.task is Task.CODE_SEARCH:
        return sample.query_tokens + sample.tokens
    return sample.tokens


def _require_trainable(task: Task, operation: str) -> None:
    if Task(task) not in TRAINABLE_TASKS:
        raise UnsupportedTask(Task(task).value, operation)


def build_vocab(corpus: Corpus, min_count: int = 1) -> Vocab:
    """Sub-tokens with frequency >= min_count, most frequent first, ties lexicographic."""
    if len(corpus) == 0:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    counts = Counter(
        subtoken
        for sample in corpus.samples
        for token in _input_tokens(sample)
        for subtoken in split_subtokens(token)
    )
    kept = sorted((s for s, c in counts.items() if c >= min_count), key=lambda s: (-counts[s], s))
    logger.debug(f"Vocabulary: {len(kept)} of {len(counts)} sub-tokens kept at min_count {min_count}")
    return Vocab(itos=SPECIAL_TOKENS + tuple(kept), min_count=min_count)


def featurize_tokens(tokens: Iterable[str], vocab: Vocab) -> np.ndarray:
    return np.array(
        [vocab.lookup(subtoken) for token in tokens for subtoken in split_subtokens(token)],
        dtype=np.int64,
    )


def featurize(sample: Sample, vocab: Vocab) -> np.ndarray:
    """Sub-token index multiset of a sample's input (the target is never included)."""
    return featurize_tokens(_input_tokens(sample), vocab)


def class_catalogue(task: Task, *corpora: Corpus) -> Tuple[str, ...]:
    if Task(task) is Task.CODE_SEARCH:
        return ("0", "1")
    return tuple(sorted({sample.target_label for corpus in corpora for sample in corpus.samples}))


def init_model(vocab: Vocab, classes: Sequence[str], dim: int, seed: int, scale: float = INIT_SCALE) -> RefModel:
    """Weights uniform in [-scale, scale] from the seeded generator (scale 0 gives a zero model)."""
    rng = make_rng(seed)
    embeddings = rng.uniform(-scale, scale, size=(len(vocab), dim)) if scale else np.zeros((len(vocab), dim))
    weights = rng.uniform(-scale, scale, size=(len(classes), dim)) if scale else np.zeros((len(classes), dim))
    return RefModel(vocab=vocab, classes=tuple(classes), dim=dim, seed=seed, embeddings=embeddings, weights=weights)


def _bags(batch: Sequence[np.ndarray], vocab_size: int) -> np.ndarray:
    """Row-normalized sub-token counts (batch x vocab); empty inputs count as a single PAD."""
    bags = np.zeros((len(batch), vocab_size))
    for row, features in enumerate(batch):
        if not features.size:
            features = np.array([PAD], dtype=np.int64)
        if features.min() < 0 or features.max() >= vocab_size:
            raise IndexOutOfVocab(f"feature index outside [0, {vocab_size})")
        bags[row] = np.bincount(features, minlength=vocab_size) / features.size
    return bags


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward_batch(model: RefModel, batch: Sequence[np.ndarray]) -> np.ndarray:
    return _bags(batch, len(model.vocab)) @ model.embeddings @ model.weights.T


def forward(model: RefModel, features: np.ndarray) -> np.ndarray:
    """Class logits for one feature multiset."""
    return forward_batch(model, [np.asarray(features, dtype=np.int64)])[0]


def _backward(model: RefModel, bags: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy, its gradient w.r.t. the code vectors and w.r.t. the output weights."""
    hidden = bags @ model.embeddings
    log_probs = _log_softmax(hidden @ model.weights.T)
    rows = np.arange(labels.size)
    loss = float(-log_probs[rows, labels].mean())

    d_logits = np.exp(log_probs)
    d_logits[rows, labels] -= 1.0
    d_logits /= labels.size
    return loss, d_logits @ model.weights, d_logits.T @ hidden


def loss_and_gradients(
    model: RefModel, batch: Sequence[np.ndarray], labels: Sequence[int]
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy of a batch and its gradients w.r.t. embeddings and weights."""
    bags = _bags(batch, len(model.vocab))
    loss, d_hidden, grad_weights = _backward(model, bags, np.asarray(labels, dtype=np.int64))
    return loss, bags.T @ d_hidden, grad_weights


def _sgd_step(model: RefModel, batch: Sequence[np.ndarray], labels: np.ndarray, learning_rate: float) -> float:
    """One in-place gradient step; only embedding rows present in the batch are touched."""
    bags = _bags(batch, len(model.vocab))
    loss, d_hidden, grad_weights = _backward(model, bags, labels)
    if not math.isfinite(loss):
        return loss
    used = np.flatnonzero(bags.any(axis=0))
    model.embeddings[used] -= learning_rate * (bags[:, used].T @ d_hidden)
    model.weights -= learning_rate * grad_weights
    return loss


def _probabilities(model: RefModel, batch: Sequence[np.ndarray]) -> np.ndarray:
    return np.exp(_log_softmax(forward_batch(model, batch)))


def _emit_epoch(
    model: RefModel,
    epoch: int,
    split: Split,
    samples: Sequence[Sample],
    features: Sequence[np.ndarray],
    labels: np.ndarray,
    sink,
    run_id: str,
    noise_rate: float,
    noise_mode: str,
) -> float:
    if not samples:
        return 0.0
    probs = _probabilities(model, features)
    predicted = probs.argmax(axis=1)
    total = 0.0
    for row, sample in enumerate(samples):
        p_true = float(probs[row, labels[row]])
        loss = -math.log(max(p_true, PROB_EPSILON))
        if not math.isfinite(loss):
            raise DivergedLoss(epoch, sample.id)
        total += loss
        append(TelemetryRecord(
            run_id=run_id,
            noise_rate=noise_rate,
            noise_mode=noise_mode,
            epoch=epoch,
            split=split,
            sample_id=sample.id,
            loss=loss,
            predicted=model.classes[predicted[row]],
            score=min(1.0, float(probs[row, predicted[row]])),
            correct=bool(predicted[row] == labels[row]),
            target=sample.target_label,
        ), sink)
    return total / len(samples)


def _labels(model: RefModel, corpus: Corpus) -> np.ndarray:
    index = model.class_index
    missing = sorted({s.target_label for s in corpus.samples} - set(index))
    if missing:
        raise SchemaViolation(None, "target_label", f"labels outside the class catalogue: {missing[:5]}")
    return np.array([index[s.target_label] for s in corpus.samples], dtype=np.int64)


def train(
    model: RefModel,
    corpus: Corpus,
    heldout: Corpus,
    hyper: Hyperparameters,
    sink,
    run_id: str = "run",
    noise_rate: float = 0.0,
    noise_mode: str = "",
    on_epoch_end: Optional[Callable[[int, RefModel], None]] = None,
) -> RefModel:
    """Mini-batch gradient descent on cross-entropy.

    After every epoch one telemetry record per train and heldout sample goes
    to ``sink``; epoch 0 is the state after the first pass. The input model
    is left untouched and the trained copy is returned.
    """
    _require_trainable(corpus.task, "reference training")
    if len(corpus) == 0:
        raise EmptyCorpus("training corpus is empty")
    if len(heldout) == 0:
        raise EmptyCorpus("held-out corpus is empty")

    model = replace(model.copy(), hyper=hyper)
    rng = make_rng(hyper.seed)
    train_samples = list(corpus.samples)
    heldout_samples = list(heldout.samples)
    train_features = [featurize(s, model.vocab) for s in train_samples]
    heldout_features = [featurize(s, model.vocab) for s in heldout_samples]
    train_labels = _labels(model, corpus)
    heldout_labels = _labels(model, heldout)

    logger.info(
        f"Training {run_id}: {len(train_samples)} samples, {len(model.classes)} classes, "
        f"dim {model.dim}, {model.parameter_count} parameters, {hyper.epochs} epochs"
    )
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(train_samples))
        for start in range(0, len(order), hyper.batch_size):
            batch = order[start:start + hyper.batch_size]
            loss = _sgd_step(model, [train_features[i] for i in batch], train_labels[batch], hyper.learning_rate)
            if not math.isfinite(loss):
                raise DivergedLoss(epoch)
        if not (np.all(np.isfinite(model.embeddings)) and np.all(np.isfinite(model.weights))):
            raise DivergedLoss(epoch)

        train_loss = _emit_epoch(model, epoch, Split.TRAIN, train_samples, train_features, train_labels,
                                 sink, run_id, noise_rate, noise_mode)
        _emit_epoch(model, epoch, Split.HELDOUT, heldout_samples, heldout_features, heldout_labels,
                    sink, run_id, noise_rate, noise_mode)
        logger.debug(f"{run_id} epoch {epoch}: mean train loss {train_loss:.6f}")
        if on_epoch_end is not None:
            on_epoch_end(epoch, model)
    return model


def predict(model: RefModel, tokens: Sequence[str], query_tokens: Sequence[str] = ()) -> LabelPrediction:
    """Argmax class and its probability; ties go to the lowest class index."""
    features = featurize_tokens(tuple(query_tokens) + tuple(tokens), model.vocab)
    probs = np.exp(_log_softmax(forward(model, features)[None, :]))[0]
    best = int(np.argmax(probs))
    return LabelPrediction(label=model.classes[best], score=min(1.0, float(probs[best])))


def save_checkpoint(model: RefModel, path) -> Path:
    path = Path(path)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dim": model.dim,
        "seed": model.seed,
        "classes": list(model.classes),
        "vocab": {"tokens": list(model.vocab.itos), "min_count": model.vocab.min_count},
        "hyper": model.hyper.model_dump() if model.hyper else None,
        "embeddings": model.embeddings.tolist(),
        "weights": model.weights.tolist(),
    }
    try:
        path.write_text(json.dumps(payload, separators=(",", ":")) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoFailure(path, str(e)) from e
    logger.info(f"Saved checkpoint {path} ({model.parameter_count} parameters)")
    return path


def load_checkpoint(path) -> RefModel:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise IoFailure(path, "checkpoint not found") from e
    except (OSError, ValueError) as e:
        raise IoFailure(path, str(e)) from e

    if payload.get("format") != CHECKPOINT_FORMAT or payload.get("version") != CHECKPOINT_VERSION:
        raise SchemaViolation(None, "format", f"not a version {CHECKPOINT_VERSION} reference-model checkpoint")
    try:
        vocab = Vocab(itos=tuple(payload["vocab"]["tokens"]), min_count=payload["vocab"]["min_count"])
        dim = int(payload["dim"])
        embeddings = np.array(payload["embeddings"], dtype=np.float64).reshape(len(vocab), dim)
        weights = np.array(payload["weights"], dtype=np.float64).reshape(len(payload["classes"]), dim)
        hyper = Hyperparameters(**payload["hyper"]) if payload.get("hyper") else None
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaViolation(None, "checkpoint", str(e)) from e
    return RefModel(
        vocab=vocab,
        classes=tuple(payload["classes"]),
        dim=dim,
        seed=int(payload["seed"]),
        embeddings=embeddings,
        weights=weights,
        hyper=hyper,
    )
