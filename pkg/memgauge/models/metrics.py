# models/metrics.py

import math
from statistics import median
from typing import Tuple

from pydantic import BaseModel, ConfigDict, model_validator


class F1Score(BaseModel):
    model_config = ConfigDict(frozen=True)

    precision: float
    recall: float
    f1: float
    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0


class LocRepAccuracy(BaseModel):
    model_config = ConfigDict(frozen=True)

    loc_acc: float
    rep_acc: float
    buggy_count: int


class BleuBreakdown(BaseModel):
    """Smoothed BLEU-4 components"""
    model_config = ConfigDict(frozen=True)

    bp: float
    precisions: Tuple[float, float, float, float]
    score: float


class MetricSeries(BaseModel):
    """Per-epoch trajectory of one metric for one run"""
    model_config = ConfigDict(frozen=True)

    run_id: str
    metric: str
    noise_rate: float = 0.0
    noise_mode: str = ""
    train: Tuple[float, ...] = ()
    heldout: Tuple[float, ...] = ()

    @model_validator(mode="after")
    def _check(self):
        for value in (*self.train, *self.heldout):
            if not math.isfinite(value):
                raise ValueError(f"{self.metric} values must be finite")
        if self.train and self.heldout and len(self.train) != len(self.heldout):
            raise ValueError("train and heldout trajectories must cover the same epochs")
        return self

    @property
    def epoch_count(self) -> int:
        return max(len(self.train), len(self.heldout))

    def final(self, split: str = "train") -> float:
        values = self.train if split == "train" else self.heldout
        return values[-1]


class ScoreCurve(BaseModel):
    """Per-sample mean prediction score across epochs, sorted descending"""
    model_config = ConfigDict(frozen=True)

    run_id: str = ""
    noise_rate: float = 0.0
    noise_mode: str = ""
    split: str = "heldout"
    values: Tuple[float, ...]

    @model_validator(mode="after")
    def _check(self):
        for value in self.values:
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"scores must lie in [0, 1], got {value}")
        if any(a < b for a, b in zip(self.values, self.values[1:])):
            raise ValueError("curve must be non-increasing")
        return self

    @property
    def sample_count(self) -> int:
        return len(self.values)

    @property
    def median(self) -> float:
        return median(self.values)
