"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to:
2 for configuration problems, 3 for bad data, 4 for oracle or training
failures.
"""
from typing import Iterable, Optional


class MemgaugeError(Exception):
    exit_code = 1

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self)}


class ConfigError(MemgaugeError):
    exit_code = 2


class DataError(MemgaugeError):
    exit_code = 3


class ExecutionError(MemgaugeError):
    exit_code = 4


class UnsupportedTask(ConfigError):
    def __init__(self, task, operation: str):
        self.task = task
        super().__init__(f"{operation} does not support task '{task}'")


# corpus

class SchemaViolation(DataError):
    def __init__(self, line: Optional[int], field: str, message: str = ""):
        self.line = line
        self.field = field
        where = f"line {line}" if line is not None else "record"
        super().__init__(f"{where}: invalid field '{field}'" + (f": {message}" if message else ""))

    def to_dict(self):
        return {**super().to_dict(), "line": self.line, "field": self.field}


class DuplicateId(DataError):
    def __init__(self, sample_id: str, line: Optional[int] = None):
        self.sample_id = sample_id
        self.line = line
        super().__init__(f"duplicate sample id '{sample_id}'")


class TaskMismatch(DataError):
    def __init__(self, expected, found, line: Optional[int] = None):
        self.expected = expected
        self.found = found
        self.line = line
        where = f" at line {line}" if line is not None else ""
        super().__init__(f"expected task '{expected}', found '{found}'{where}")


class UnbalancedDelimiters(DataError):
    def __init__(self, position: int):
        self.position = position
        super().__init__(f"closing brace without an opening one at token {position}")


class EmptyTokenStream(DataError):
    def __init__(self, sample_id: str = ""):
        self.sample_id = sample_id
        super().__init__(f"no tokens survived lexing for '{sample_id}'")


class IoFailure(DataError):
    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"{path}: {reason}")

    def to_dict(self):
        return {**super().to_dict(), "path": self.path}


# noising

class IneligibleSample(DataError):
    def __init__(self, sample_id: str, reason: str):
        self.sample_id = sample_id
        super().__init__(f"sample '{sample_id}' is ineligible: {reason}")


class StalePlanError(DataError):
    def __init__(self, missing: Iterable[str]):
        self.missing = sorted(missing)
        preview = ", ".join(self.missing[:5])
        super().__init__(f"noise plan references {len(self.missing)} unknown sample ids ({preview})")


# telemetry

class InvariantViolation(DataError):
    pass


class RaggedEpochs(DataError):
    def __init__(self, split: str, epoch: int, detail: str):
        self.split = split
        self.epoch = epoch
        super().__init__(f"{split} split of epoch {epoch}: {detail}")


class OutOfRange(DataError):
    def __init__(self, epoch: int, epoch_count: int):
        self.epoch = epoch
        self.epoch_count = epoch_count
        super().__init__(f"epoch {epoch} outside trace of {epoch_count} epochs")


# metrics

class NonFiniteInput(DataError):
    pass


class EmptySequence(DataError):
    pass


class IndexOutOfBounds(DataError):
    pass


class OverlappingOccurrences(DataError):
    pass


class EmptyName(DataError):
    pass


class NoBuggySamples(DataError):
    pass


class EmptySlice(DataError):
    pass


class EmptyReference(DataError):
    pass


class NegativeLoss(DataError):
    pass


class EmptySplit(DataError):
    pass


# csr / refmodel

class EmptyTestSet(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class IndexOutOfVocab(DataError):
    pass


class OracleFailure(ExecutionError):
    def __init__(self, candidate_id: str, reason: str):
        self.candidate_id = candidate_id
        super().__init__(f"oracle failed on '{candidate_id}': {reason}")

    def to_dict(self):
        return {**super().to_dict(), "candidate_id": self.candidate_id}


class DivergedLoss(ExecutionError):
    def __init__(self, epoch: int, sample_id: str = ""):
        self.epoch = epoch
        super().__init__(f"non-finite loss in epoch {epoch}" + (f" on '{sample_id}'" if sample_id else ""))


# report

class TooManySeries(DataError):
    pass


class EmptyInput(DataError):
    pass


class HeterogeneousArtifacts(DataError):
    pass


class MissingRun(DataError):
    def __init__(self, rate: float):
        self.rate = rate
        super().__init__(f"no run found for noise rate {rate:g}")

    def to_dict(self):
        return {**super().to_dict(), "rate": self.rate}
