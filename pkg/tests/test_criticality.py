import pytest

from memgauge.errors import EmptyTestSet, OracleFailure
from memgauge.models.sample import Corpus, Sample, Task
from memgauge.services import criticality
from memgauge.services.corpus import normalize_source
from memgauge.utils.validators import validate_fresh_name

from conftest import ADD_SOURCE


def constant_oracle(tokens):
    return "run"


def keyed_on(name):
    def oracle(tokens):
        return "uses-key" if name in tokens else "other"
    return oracle


def sample_with(sample_id, variables, extra=()):
    tokens = list(extra)
    occurrences = {}
    for name in variables:
        occurrences[name] = (len(tokens),)
        tokens.append(name)
    return Sample(id=sample_id, task=Task.METHOD_NAME, tokens=tuple(tokens), variables=occurrences, target_label="run")


def test_candidates_one_per_variable():
    sample = normalize_source(ADD_SOURCE, Task.METHOD_NAME, "add1", target_label="add")
    found = criticality.candidates(sample)
    assert [(c.variable, c.fresh_name) for c in found] == [("a", "var1"), ("b", "var2"), ("c", "var3")]
    for candidate in found:
        assert validate_fresh_name(candidate.fresh_name)
        assert len(candidate.tokens) == len(sample.tokens)
        changed = [i for i, (x, y) in enumerate(zip(sample.tokens, candidate.tokens)) if x != y]
        assert changed == list(sample.variables[candidate.variable])


def test_candidates_skip_existing_names():
    sample = sample_with("s", ["a", "b"], extra=["var1"])
    assert [c.fresh_name for c in criticality.candidates(sample)] == ["var2", "var3"]
    assert criticality.candidates(sample_with("none", [])) == ()


def test_is_critical():
    sample = sample_with("s", ["a", "b"])
    assert criticality.is_critical(sample, constant_oracle) is False
    assert criticality.is_critical(sample, keyed_on("a")) is True
    assert criticality.is_critical(sample_with("empty", [], extra=["x"]), keyed_on("x")) is False


def test_check_short_circuits():
    checker = criticality.RenamingCheck(keyed_on("a"))
    critical, correct = checker.check(sample_with("s", ["a", "b", "c"]))
    assert critical is True
    assert correct is False
    # original prediction plus the first renaming
    assert checker.queries == 2


def test_budget_caps_candidates():
    checker = criticality.RenamingCheck(keyed_on("c"), budget=2)
    assert checker.is_critical(sample_with("s", ["a", "b", "c"])) is False
    assert checker.queries == 3


def test_csr_ratios():
    test_set = Corpus.from_samples(Task.METHOD_NAME, [
        sample_with("s0", ["a"]),
        sample_with("s1", ["b"]),
        sample_with("s2", ["c"]),
        sample_with("s3", ["d"]),
    ])
    assert criticality.csr(test_set, constant_oracle).ratio == 0.0
    report = criticality.csr(test_set, keyed_on("a"))
    assert report.ratio == 0.25
    assert report.critical_ids == ("s0",)
    assert report.test_size == 4

    keyed = Corpus.from_samples(Task.METHOD_NAME, [sample_with(f"k{i}", ["key"]) for i in range(5)])
    assert criticality.csr(keyed, keyed_on("key")).ratio == 1.0


def test_csr_counts_correct_predictions():
    test_set = Corpus.from_samples(Task.METHOD_NAME, [sample_with("s0", ["a"]), sample_with("s1", ["b"])])
    report = criticality.csr(test_set, constant_oracle)
    assert report.correct_count == 2
    assert report.critical_correct == 0


def test_parallel_csr_matches_sequential():
    test_set = Corpus.from_samples(Task.METHOD_NAME, [sample_with(f"s{i}", ["a" if i % 3 else "b"]) for i in range(12)])
    sequential = criticality.csr(test_set, keyed_on("a"))
    parallel = criticality.csr(test_set, keyed_on("a"), workers=4)
    assert parallel.critical_ids == sequential.critical_ids
    assert parallel.queries_issued == sequential.queries_issued


def test_empty_test_set():
    with pytest.raises(EmptyTestSet):
        criticality.csr(Corpus.from_samples(Task.METHOD_NAME, []), constant_oracle)


def test_oracle_errors_carry_candidate_id():
    def broken(tokens):
        if "var1" in tokens:
            raise RuntimeError("model crashed")
        return "run"

    with pytest.raises(OracleFailure) as info:
        criticality.is_critical(sample_with("s", ["a"]), broken)
    assert info.value.candidate_id == "s:a->var1"
