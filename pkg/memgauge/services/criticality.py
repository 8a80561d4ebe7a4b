# services/criticality.py

"""Critical sample ratio under single-place variable renaming.

A test sample is critical when renaming all occurrences of one of its
variables to a fresh ``varN`` name changes the oracle's prediction.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from threading import Lock
from typing import Optional, Sequence, Tuple

from memgauge.errors import EmptyTestSet, MemgaugeError, OracleFailure
from memgauge.models.oracle import CsrReport, TransformCandidate
from memgauge.models.sample import Corpus, Sample
from memgauge.services.oracles import as_oracle, same_prediction

logger = logging.getLogger("memgauge")


def candidates(sample: Sample) -> Tuple[TransformCandidate, ...]:
    """One renaming per variable, in first-occurrence order.

    Fresh names count up from var1, skipping any name already present in the
    sample or handed out to an earlier variable.
    """
    taken = set(sample.tokens)
    result = []
    counter = 1
    for variable in sorted(sample.variables, key=lambda name: sample.variables[name][0]):
        while f"var{counter}" in taken:
            counter += 1
        fresh = f"var{counter}"
        taken.add(fresh)
        positions = set(sample.variables[variable])
        tokens = tuple(fresh if i in positions else token for i, token in enumerate(sample.tokens))
        result.append(TransformCandidate(origin_id=sample.id, variable=variable, fresh_name=fresh, tokens=tokens))
    return tuple(result)


def expected_output(sample: Sample):
    return sample.target_label if sample.target_label else tuple(sample.target_tokens)


class RenamingCheck:
    """Renames variables of samples against one oracle and counts the queries it issues"""
    def __init__(self, oracle, budget: Optional[int] = None):
        self.oracle = as_oracle(oracle)
        self.budget = budget
        self.queries = 0
        self._lock = Lock()

    def _ask(self, item_id: str, tokens: Sequence[str], query_tokens: Sequence[str]):
        with self._lock:
            self.queries += 1
        try:
            return self.oracle.predict(item_id, tokens, query_tokens)
        except MemgaugeError:
            raise
        except Exception as e:
            raise OracleFailure(item_id, str(e)) from e

    def check(self, sample: Sample) -> Tuple[bool, bool]:
        """(is critical, original prediction correct)"""
        original = self._ask(sample.id, sample.tokens, sample.query_tokens)
        correct = same_prediction(original, expected_output(sample))
        pool = candidates(sample)
        if self.budget is not None:
            pool = pool[:self.budget]
        for candidate in pool:
            renamed = self._ask(candidate.candidate_id, candidate.tokens, sample.query_tokens)
            if not same_prediction(renamed, original):
                logger.debug(f"{sample.id} is critical: {candidate.candidate_id} changes the prediction")
                return True, correct
        return False, correct

    def is_critical(self, sample: Sample) -> bool:
        return self.check(sample)[0]


def is_critical(sample: Sample, oracle, budget: Optional[int] = None) -> bool:
    return RenamingCheck(oracle, budget).is_critical(sample)


def csr(
    test_set: Corpus,
    oracle,
    budget: Optional[int] = None,
    workers: int = 1,
    run_id: str = "",
    noise_rate: float = 0.0,
    epoch: Optional[int] = None,
) -> CsrReport:
    """Fraction of test samples (correctly predicted or not) that are critical."""
    if len(test_set) == 0:
        raise EmptyTestSet("CSR needs at least one test sample")
    checker = RenamingCheck(oracle, budget)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            outcomes = list(executor.map(checker.check, test_set.samples))
    else:
        outcomes = [checker.check(sample) for sample in test_set.samples]

    critical_ids = tuple(s.id for s, (critical, _) in zip(test_set.samples, outcomes) if critical)
    report = CsrReport(
        run_id=run_id,
        noise_rate=noise_rate,
        epoch=epoch,
        test_size=len(test_set),
        critical_ids=critical_ids,
        queries_issued=checker.queries,
        correct_count=sum(1 for _, correct in outcomes if correct),
        critical_correct=sum(1 for critical, correct in outcomes if critical and correct),
    )
    logger.info(f"CSR {report.ratio:.4f} ({report.critical_count}/{report.test_size}) with {report.queries_issued} queries")
    return report
