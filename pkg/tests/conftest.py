import pytest

from memgauge.config import get_settings
from memgauge.models.sample import BugMeta, Corpus, Sample, Task


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Each test sees settings built from its own environment"""
    for name in ("MEMGAUGE_SEED", "MEMGAUGE_MAX_WORKERS", "MEMGAUGE_LOG_FILE"):
        monkeypatch.delenv(name, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


ADD_SOURCE = """int add(int a, int b) {
    int c = a + b;
    return c;
}"""


def method_sample(sample_id, label, tokens=None, statements=None, variables=None):
    if tokens is None:
        tokens = ("void", sample_id.replace("-", "_"), "(", ")", "{", "x", "=", "1", ";", "y", "=", "x", ";", "}")
        statements = ((5, 9), (9, 13))
        variables = {"x": (5, 11), "y": (9,)}
    return Sample(
        id=sample_id,
        task=Task.METHOD_NAME,
        tokens=tuple(tokens),
        statements=tuple(statements or ()),
        variables=variables or {},
        target_label=label,
    )


def method_corpus(size, labels=("run", "get", "set", "close")):
    return Corpus.from_samples(
        Task.METHOD_NAME,
        [method_sample(f"m{i}", labels[i % len(labels)]) for i in range(size)],
    )


def misuse_sample(sample_id, buggy):
    tokens = ("a", "=", "x", "+", "y", ";", "b", "=", "c", "x")
    meta = BugMeta(is_buggy=True, error_location=5, repair_targets=(2, 9)) if buggy else BugMeta(is_buggy=False)
    return Sample(
        id=sample_id,
        task=Task.VAR_MISUSE,
        tokens=tokens,
        variables={"a": (0,), "x": (2, 9), "y": (4,)},
        bug_meta=meta,
    )


def search_sample(sample_id, label, tokens=("x", "=", "x", "+", "y"), query=("add", "x")):
    return Sample(id=sample_id, task=Task.CODE_SEARCH, tokens=tuple(tokens), query_tokens=tuple(query), target_label=label)


@pytest.fixture
def add_source():
    return ADD_SOURCE
