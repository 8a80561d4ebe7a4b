# models/run.py

from datetime import datetime
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from memgauge.models.noise import NoiseMode, MODES_BY_TASK
from memgauge.models.sample import Task


class RunStatus(str, Enum):
    """Status of one noise-rate pipeline"""
    QUEUED = "queued"
    PROCESSING = "processing"
    COMPLETED = "completed"
    FAILED = "failed"


class Hyperparameters(BaseModel):
    """Reference trainer settings"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=50, ge=1)
    batch_size: int = Field(default=32, ge=1)
    learning_rate: float = Field(default=0.1, ge=0.0)
    seed: int = 0
    dim: int = Field(default=64, ge=1)
    min_count: int = Field(default=1, ge=1)


class CsrSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    enabled: bool = False
    per_epoch: bool = False
    budget: Optional[int] = Field(default=None, ge=1)
    workers: int = Field(default=1, ge=1)


class StudyManifest(BaseModel):
    """Everything needed to reproduce a study"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "study"
    task: Task
    base_corpus: str
    heldout_corpus: str
    noise_mode: NoiseMode
    rates: Tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    noise_seed: int = 0
    hyper: Hyperparameters = Hyperparameters()
    csr: CsrSettings = CsrSettings()
    workers: Optional[int] = Field(default=None, ge=1)

    @field_validator("rates")
    @classmethod
    def _check_rates(cls, rates):
        if not rates:
            raise ValueError("at least one noise rate is required")
        for rate in rates:
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"noise rate {rate} outside [0, 1]")
        if len(set(rates)) != len(rates):
            raise ValueError("noise rates must be distinct")
        return tuple(sorted(rates))

    @model_validator(mode="after")
    def _check_mode(self):
        if self.noise_mode not in MODES_BY_TASK[self.task]:
            raise ValueError(f"noise mode '{self.noise_mode.value}' does not apply to task '{self.task.value}'")
        return self


def rate_label(rate: float) -> str:
    """Directory-safe name of a noise level, e.g. ``rate-025``"""
    return f"rate-{round(rate * 100):03d}"


class RateRun:
    """One noise-rate pipeline within a study"""
    def __init__(self, manifest: StudyManifest, rate: float):
        self.id = f"{manifest.name}-{rate_label(rate)}"
        self.manifest = manifest
        self.rate = rate
        self.status = RunStatus.QUEUED
        self.stage = "queued"
        self.queue_time = datetime.now()
        self.processing_start_time: Optional[datetime] = None
        self.completion_time: Optional[datetime] = None
        self.error_record: Optional[Dict[str, Any]] = None
        self.artifacts: Dict[str, str] = {}

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary (no timestamps, so study outputs stay reproducible)"""
        return {
            "id": self.id,
            "rate": self.rate,
            "status": self.status.value,
            "stage": self.stage,
            "artifacts": dict(sorted(self.artifacts.items())),
            "error": self.error_record,
        }
