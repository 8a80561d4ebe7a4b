# models/oracle.py

from typing import Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, model_validator

from memgauge.utils.validators import validate_fresh_name


class TransformCandidate(BaseModel):
    """A single-place variable renaming of one sample"""
    model_config = ConfigDict(frozen=True)

    origin_id: str
    variable: str
    fresh_name: str
    tokens: Tuple[str, ...]

    @model_validator(mode="after")
    def _check(self):
        if not validate_fresh_name(self.fresh_name):
            raise ValueError(f"fresh name '{self.fresh_name}' does not match var[0-9]+")
        return self

    @property
    def candidate_id(self) -> str:
        return f"{self.origin_id}:{self.variable}->{self.fresh_name}"


class LabelPrediction(BaseModel):
    """Predicted class with its softmax probability"""
    label: str
    score: float


class OracleRequest(BaseModel):
    """One line of the oracle protocol (also the body of POST /predict)"""
    id: str
    tokens: Tuple[str, ...]
    query_tokens: Tuple[str, ...] = ()


class OracleResponse(BaseModel):
    id: str
    prediction: Union[str, Tuple[str, ...]]
    score: Optional[float] = None


class CsrReport(BaseModel):
    """Critical sample ratio of a test set under one oracle"""
    model_config = ConfigDict(frozen=True)

    run_id: str = ""
    noise_rate: float = 0.0
    epoch: Optional[int] = None
    test_size: int
    critical_ids: Tuple[str, ...]
    queries_issued: int
    correct_count: int = 0
    critical_correct: int = 0

    @model_validator(mode="after")
    def _check(self):
        if self.test_size <= 0:
            raise ValueError("test_size must be positive")
        if len(self.critical_ids) > self.test_size:
            raise ValueError("more critical samples than test samples")
        return self

    @property
    def ratio(self) -> float:
        return len(self.critical_ids) / self.test_size

    @property
    def critical_count(self) -> int:
        return len(self.critical_ids)
