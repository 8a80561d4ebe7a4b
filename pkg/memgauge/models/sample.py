# models/sample.py

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, Mapping, Optional, Tuple

from pydantic import BaseModel, ConfigDict, model_validator

from memgauge.errors import DuplicateId, TaskMismatch


class Task(str, Enum):
    """Code-intelligence task a corpus record belongs to"""
    METHOD_NAME = "method_name"
    VAR_MISUSE = "var_misuse"
    CODE_TO_TEXT = "code_to_text"
    CODE_SEARCH = "code_search"


def _invalid(field_name: str, message: str) -> ValueError:
    # the loader recovers the field name from the bracketed prefix
    return ValueError(f"[{field_name}] {message}")


class BugMeta(BaseModel):
    """Bug annotation of a var_misuse sample"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    is_buggy: bool
    error_location: int = 0
    repair_targets: Tuple[int, ...] = ()

    @model_validator(mode="after")
    def _check(self):
        if list(self.repair_targets) != sorted(set(self.repair_targets)):
            raise _invalid("repair_targets", "must be sorted and unique")
        if not self.is_buggy and (self.error_location != 0 or self.repair_targets):
            raise _invalid("bug_meta", "bug-free samples need error_location 0 and no repair targets")
        return self


class Sample(BaseModel):
    """One task-tagged corpus record"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    id: str
    task: Task
    tokens: Tuple[str, ...]
    statements: Tuple[Tuple[int, int], ...] = ()
    variables: Dict[str, Tuple[int, ...]] = {}
    target_label: str = ""
    target_tokens: Tuple[str, ...] = ()
    bug_meta: Optional[BugMeta] = None
    query_tokens: Tuple[str, ...] = ()

    @model_validator(mode="after")
    def _check_indices(self):
        if not self.id:
            raise _invalid("id", "must be non-empty")
        size = len(self.tokens)

        previous_end = 0
        for start, end in self.statements:
            if not 0 <= start < end <= size:
                raise _invalid("statements", f"span ({start}, {end}) outside [0, {size})")
            if start < previous_end:
                raise _invalid("statements", "spans must be disjoint and ordered")
            previous_end = end

        for name, positions in self.variables.items():
            if not positions:
                raise _invalid("variables", f"'{name}' has no occurrences")
            if list(positions) != sorted(set(positions)):
                raise _invalid("variables", f"occurrences of '{name}' must be sorted and unique")
            for index in positions:
                if not 0 <= index < size:
                    raise _invalid("variables", f"index {index} outside [0, {size})")
                if self.tokens[index] != name:
                    raise _invalid("variables", f"token {index} is '{self.tokens[index]}', not '{name}'")

        if self.bug_meta is not None:
            if self.task is not Task.VAR_MISUSE:
                raise _invalid("bug_meta", "only var_misuse samples carry bug metadata")
            for index in (self.bug_meta.error_location, *self.bug_meta.repair_targets):
                if not 0 <= index < size:
                    raise _invalid("bug_meta", f"index {index} outside [0, {size})")

        if self.task is Task.CODE_SEARCH and self.target_label not in ("0", "1"):
            raise _invalid("target_label", "code_search labels are '0' or '1'")
        return self

    @property
    def is_buggy(self) -> bool:
        return self.bug_meta is not None and self.bug_meta.is_buggy

    def stratum(self) -> str:
        """Class used for stratified noise selection."""
        if self.task is Task.VAR_MISUSE:
            return "buggy" if self.is_buggy else "correct"
        if self.task is Task.CODE_SEARCH:
            return self.target_label
        return "all"

    def to_json(self) -> str:
        return self.model_dump_json()


@dataclass(frozen=True)
class Corpus:
    """Ordered, immutable collection of samples sharing one task"""
    task: Task
    samples: Tuple[Sample, ...]
    label_pool: FrozenSet[str] = field(default_factory=frozenset)
    docstring_pool: FrozenSet[Tuple[str, ...]] = field(default_factory=frozenset)

    @classmethod
    def from_samples(cls, task: Task, samples: Iterable[Sample]) -> "Corpus":
        samples = tuple(samples)
        seen = set()
        for sample in samples:
            if sample.task is not task:
                raise TaskMismatch(task.value, sample.task.value)
            if sample.id in seen:
                raise DuplicateId(sample.id)
            seen.add(sample.id)
        return cls(
            task=task,
            samples=samples,
            label_pool=frozenset(s.target_label for s in samples),
            docstring_pool=frozenset(s.target_tokens for s in samples),
        )

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @cached_property
    def by_id(self) -> Mapping[str, Sample]:
        return {sample.id: sample for sample in self.samples}

    def replace_samples(self, samples: Iterable[Sample]) -> "Corpus":
        return Corpus.from_samples(self.task, samples)

    def strata(self) -> Dict[str, Tuple[Sample, ...]]:
        groups: Dict[str, list] = {}
        for sample in self.samples:
            groups.setdefault(sample.stratum(), []).append(sample)
        return {key: tuple(group) for key, group in sorted(groups.items())}
