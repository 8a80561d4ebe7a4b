# models/telemetry.py

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

LOSS_SUM_TOLERANCE = 1e-9


class Split(str, Enum):
    TRAIN = "train"
    HELDOUT = "heldout"


Prediction = Union[str, Tuple[str, ...]]


class TelemetryRecord(BaseModel):
    """One (run, epoch, split, sample) observation"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    run_id: str
    noise_rate: float = Field(ge=0.0, le=1.0)
    noise_mode: str
    epoch: int = Field(ge=0)
    split: Split
    sample_id: str
    loss: float
    loc_loss: Optional[float] = None
    rep_loss: Optional[float] = None
    predicted: Prediction
    score: float
    correct: bool
    target: Prediction
    # var_misuse only: probability mass on the correct repair variable
    repair_mass: Optional[float] = None

    @model_validator(mode="after")
    def _check(self):
        if not math.isfinite(self.loss) or self.loss < 0:
            raise ValueError(f"loss must be finite and non-negative, got {self.loss}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        parts = (self.loc_loss, self.rep_loss)
        if any(part is not None for part in parts):
            if any(part is None for part in parts):
                raise ValueError("loc_loss and rep_loss must be given together")
            if any(not math.isfinite(part) or part < 0 for part in parts):
                raise ValueError("loss components must be finite and non-negative")
            if abs(self.loss - (self.loc_loss + self.rep_loss)) > LOSS_SUM_TOLERANCE:
                raise ValueError(
                    f"loss {self.loss} differs from loc_loss + rep_loss = {self.loc_loss + self.rep_loss}"
                )
        if self.repair_mass is not None and not 0.0 <= self.repair_mass <= 1.0 + LOSS_SUM_TOLERANCE:
            raise ValueError(f"repair_mass must lie in [0, 1], got {self.repair_mass}")
        return self

    @property
    def is_var_misuse(self) -> bool:
        return self.loc_loss is not None

    def to_json(self) -> str:
        payload = self.model_dump(mode="json")
        if payload["repair_mass"] is None:
            del payload["repair_mass"]
        return json.dumps(payload, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class RunTrace:
    """Telemetry of one run grouped by (epoch, split)"""
    run_id: str
    noise_rate: float
    noise_mode: str
    epoch_count: int
    groups: Dict[Tuple[int, Split], Tuple[TelemetryRecord, ...]] = field(default_factory=dict)
    universe: Dict[Split, FrozenSet[str]] = field(default_factory=dict)

    def records(self, epoch: int, split: Split) -> Tuple[TelemetryRecord, ...]:
        return self.groups.get((epoch, Split(split)), ())

    def splits(self) -> Tuple[Split, ...]:
        return tuple(split for split in Split if split in self.universe)

    def __len__(self) -> int:
        return sum(len(group) for group in self.groups.values())
