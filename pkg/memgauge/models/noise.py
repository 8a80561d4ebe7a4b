# models/noise.py

import hashlib
from enum import Enum
from typing import Dict, FrozenSet, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from memgauge.models.sample import Task


class NoiseMode(str, Enum):
    """Output-noise and input-noise schemes"""
    # method_name
    LABEL_SWAP = "label_swap"
    STMT_DELETE = "stmt_delete"
    NAME_LEAK = "name_leak"
    # var_misuse
    OUTPUT_FLIP = "output_flip"
    INPUT_CUES = "input_cues"
    # code_to_text
    DOC_SWAP = "doc_swap"
    MASK_OVERLAP = "mask_overlap"
    # code_search
    LABEL_FLIP = "label_flip"
    IDENTITY_TOKENS = "identity_tokens"


MODES_BY_TASK: Dict[Task, Tuple[NoiseMode, ...]] = {
    Task.METHOD_NAME: (NoiseMode.LABEL_SWAP, NoiseMode.STMT_DELETE, NoiseMode.NAME_LEAK),
    Task.VAR_MISUSE: (NoiseMode.OUTPUT_FLIP, NoiseMode.INPUT_CUES),
    Task.CODE_TO_TEXT: (NoiseMode.DOC_SWAP, NoiseMode.MASK_OVERLAP),
    Task.CODE_SEARCH: (NoiseMode.LABEL_FLIP, NoiseMode.IDENTITY_TOKENS),
}

OUTPUT_NOISE = frozenset({
    NoiseMode.LABEL_SWAP, NoiseMode.OUTPUT_FLIP, NoiseMode.DOC_SWAP, NoiseMode.LABEL_FLIP,
})


def task_of(mode: NoiseMode) -> Task:
    for task, modes in MODES_BY_TASK.items():
        if mode in modes:
            return task
    raise KeyError(mode)


class NoiseDirective(BaseModel):
    """Precomputed edit for one selected sample; only the fields its mode uses are set"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    new_label: Optional[str] = None
    statement_index: Optional[int] = None
    variable: Optional[str] = None
    new_docstring: Optional[Tuple[str, ...]] = None
    error_location: Optional[int] = None
    top_k: Optional[int] = None


class NoisePlan(BaseModel):
    """Seeded selection of samples plus per-sample directives for one noise level"""
    model_config = ConfigDict(frozen=True)

    seed: int
    rate: float = Field(ge=0.0, le=1.0)
    mode: NoiseMode
    selected: FrozenSet[str] = frozenset()
    directives: Dict[str, NoiseDirective] = {}
    shortfall: int = 0
    requested_by_class: Dict[str, int] = {}
    selected_by_class: Dict[str, int] = {}
    shortfall_by_class: Dict[str, int] = {}

    @model_validator(mode="after")
    def _check(self):
        stray = set(self.directives) - set(self.selected)
        if stray:
            raise ValueError(f"directives reference unselected samples: {sorted(stray)[:5]}")
        if self.shortfall != sum(self.shortfall_by_class.values()):
            raise ValueError("shortfall must equal the per-class shortfall total")
        return self

    def selected_checksum(self) -> str:
        digest = hashlib.sha256("\n".join(sorted(self.selected)).encode("utf-8"))
        return digest.hexdigest()

    def manifest(self) -> dict:
        """Provenance record written next to a noisy corpus"""
        return {
            "seed": self.seed,
            "rate": self.rate,
            "mode": self.mode.value,
            "selected_count": len(self.selected),
            "shortfall": self.shortfall,
            "requested_by_class": dict(sorted(self.requested_by_class.items())),
            "selected_by_class": dict(sorted(self.selected_by_class.items())),
            "shortfall_by_class": dict(sorted(self.shortfall_by_class.items())),
            "selected_sha256": self.selected_checksum(),
        }
