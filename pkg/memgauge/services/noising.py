#services/noising.py

"""Seeded output-noise and input-noise variants of a corpus.

Selection is stratified: var_misuse samples are drawn separately from the
buggy and correct classes, code_search samples separately from positives
and negatives, so each class receives round(rate * class size) noisy
samples. Samples a scheme cannot be applied to are skipped and counted as
shortfall. Directives are drawn in corpus order from one PCG64 stream after
the selection, which keeps application order-free.
"""

import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from memgauge.config import get_settings
from memgauge.errors import ConfigError, IneligibleSample, IoFailure, StalePlanError, UnsupportedTask
from memgauge.models.noise import MODES_BY_TASK, NoiseDirective, NoiseMode, NoisePlan
from memgauge.models.sample import BugMeta, Corpus, Sample, Task
from memgauge.services.corpus import write_corpus
from memgauge.utils.rng import make_rng, round_half_up
from memgauge.utils.subtokens import normalized_form
from memgauge.utils.validators import validate_rate

logger = logging.getLogger("memgauge")

TARGET_TOKEN = "TARGET"
BUGGY_TOKEN = "BUGGY"
NONBUGGY_TOKEN = "NONBUGGY"
MASK_TOKEN = "MASK"
POSITIVE_TOKEN = "POSITIVE"
NEGATIVE_TOKEN = "NEGATIVE"


# ---------------------------------------------------------------------------
# token helpers

def most_frequent_tokens(tokens: Sequence[str], k: int = 1) -> List[str]:
    """Top-k tokens by count; ties go to the earliest first occurrence."""
    counts = Counter(tokens)
    first_seen: Dict[str, int] = {}
    for index, token in enumerate(tokens):
        first_seen.setdefault(token, index)
    ranked = sorted(counts, key=lambda token: (-counts[token], first_seen[token]))
    return ranked[:k]


def most_frequent_variable(sample: Sample) -> Optional[str]:
    if not sample.variables:
        return None
    return min(sample.variables, key=lambda name: (-len(sample.variables[name]), sample.variables[name][0]))


def _replace_positions(sample: Sample, positions, new_token: str, **updates) -> Sample:
    """Overwrite token positions and drop them from the variable map."""
    positions = set(positions)
    tokens = tuple(new_token if i in positions else t for i, t in enumerate(sample.tokens))
    variables = {}
    for name, occurrences in sample.variables.items():
        kept = tuple(i for i in occurrences if i not in positions)
        if kept:
            variables[name] = kept
    return sample.model_copy(update={"tokens": tokens, "variables": variables, **updates})


def _remove_span(sample: Sample, statement_index: int) -> Sample:
    start, end = sample.statements[statement_index]
    width = end - start

    def shift(index: int) -> int:
        return index - width if index >= end else index

    statements = tuple(
        (shift(s), shift(e)) for i, (s, e) in enumerate(sample.statements) if i != statement_index
    )
    variables = {}
    for name, occurrences in sample.variables.items():
        kept = tuple(shift(i) for i in occurrences if not start <= i < end)
        if kept:
            variables[name] = kept
    return sample.model_copy(update={
        "tokens": sample.tokens[:start] + sample.tokens[end:],
        "statements": statements,
        "variables": variables,
    })


def _masked_positions(sample: Sample) -> List[int]:
    doc_forms = {normalized_form(t) for t in sample.target_tokens} - {""}
    return [i for i, token in enumerate(sample.tokens) if normalized_form(token) in doc_forms]


def _fake_bug_locations(sample: Sample, variable: str) -> List[int]:
    occupied = set(sample.variables.get(variable, ()))
    return [i for i in range(1, len(sample.tokens)) if i not in occupied]


def _rebuild(sample: Sample, **updates) -> Sample:
    # model_copy skips validation; re-validate edited samples
    return Sample.model_validate({**sample.model_dump(), **updates})


# ---------------------------------------------------------------------------
# per-task schemes

def noise_method_name(sample: Sample, directive: NoiseDirective, mode: NoiseMode) -> Sample:
    mode = NoiseMode(mode)
    if sample.task is not Task.METHOD_NAME:
        raise IneligibleSample(sample.id, f"{mode.value} needs a method_name sample")

    if mode is NoiseMode.LABEL_SWAP:
        if directive.new_label is None or directive.new_label == sample.target_label:
            raise IneligibleSample(sample.id, "label_swap needs a different new label")
        return _rebuild(sample, target_label=directive.new_label)

    if mode is NoiseMode.STMT_DELETE:
        if len(sample.statements) < 2:
            raise IneligibleSample(sample.id, "stmt_delete needs at least two statements")
        index = directive.statement_index
        if index is None or not 0 <= index < len(sample.statements):
            raise IneligibleSample(sample.id, f"statement index {index} out of range")
        return _rebuild(_remove_span(sample, index))

    if mode is NoiseMode.NAME_LEAK:
        variable = directive.variable or most_frequent_variable(sample)
        if variable is None or variable not in sample.variables:
            raise IneligibleSample(sample.id, "name_leak needs a variable")
        if not sample.target_label:
            raise IneligibleSample(sample.id, "name_leak needs a method name")
        return _rebuild(_replace_positions(sample, sample.variables[variable], sample.target_label))

    raise UnsupportedTask(Task.METHOD_NAME.value, mode.value)


def noise_var_misuse(sample: Sample, directive: NoiseDirective, mode: NoiseMode) -> Sample:
    mode = NoiseMode(mode)
    if sample.task is not Task.VAR_MISUSE or sample.bug_meta is None:
        raise IneligibleSample(sample.id, f"{mode.value} needs a var_misuse sample with bug metadata")

    if mode is NoiseMode.OUTPUT_FLIP:
        if sample.is_buggy:
            return _rebuild(sample, bug_meta=BugMeta(is_buggy=False).model_dump())
        variable = directive.variable
        if variable is None or variable not in sample.variables:
            raise IneligibleSample(sample.id, "correct-to-buggy flip needs a variable for repair targets")
        location = directive.error_location
        if location is None or location not in _fake_bug_locations(sample, variable):
            raise IneligibleSample(sample.id, f"error location {location} is not usable")
        bug_meta = BugMeta(is_buggy=True, error_location=location, repair_targets=sample.variables[variable])
        return _rebuild(sample, bug_meta=bug_meta.model_dump())

    if mode is NoiseMode.INPUT_CUES:
        if sample.is_buggy:
            meta = sample.bug_meta
            noisy = sample
            if meta.repair_targets:
                target = sample.tokens[meta.repair_targets[0]]
                positions = [i for i, token in enumerate(sample.tokens) if token == target]
                noisy = _replace_positions(noisy, positions, TARGET_TOKEN)
            noisy = _replace_positions(noisy, [meta.error_location], BUGGY_TOKEN)
            return _rebuild(noisy)
        frequent = most_frequent_tokens(sample.tokens, 1)[0]
        positions = [i for i, token in enumerate(sample.tokens) if token == frequent]
        return _rebuild(_replace_positions(sample, positions, NONBUGGY_TOKEN))

    raise UnsupportedTask(Task.VAR_MISUSE.value, mode.value)


def noise_code_to_text(sample: Sample, directive: NoiseDirective, mode: NoiseMode) -> Sample:
    mode = NoiseMode(mode)
    if sample.task is not Task.CODE_TO_TEXT:
        raise IneligibleSample(sample.id, f"{mode.value} needs a code_to_text sample")

    if mode is NoiseMode.DOC_SWAP:
        replacement = directive.new_docstring
        if replacement is None or tuple(replacement) == sample.target_tokens:
            raise IneligibleSample(sample.id, "doc_swap needs a different docstring")
        return _rebuild(sample, target_tokens=tuple(replacement))

    if mode is NoiseMode.MASK_OVERLAP:
        positions = _masked_positions(sample)
        if not positions:
            raise IneligibleSample(sample.id, "no code token overlaps the docstring")
        return _rebuild(_replace_positions(sample, positions, MASK_TOKEN))

    raise UnsupportedTask(Task.CODE_TO_TEXT.value, mode.value)


def noise_code_search(sample: Sample, directive: NoiseDirective, mode: NoiseMode) -> Sample:
    mode = NoiseMode(mode)
    if sample.task is not Task.CODE_SEARCH:
        raise IneligibleSample(sample.id, f"{mode.value} needs a code_search sample")

    if mode is NoiseMode.LABEL_FLIP:
        return _rebuild(sample, target_label="0" if sample.target_label == "1" else "1")

    if mode is NoiseMode.IDENTITY_TOKENS:
        k = directive.top_k or get_settings().IDENTITY_TOP_K
        frequent = set(most_frequent_tokens(sample.tokens + sample.query_tokens, k))
        marker = POSITIVE_TOKEN if sample.target_label == "1" else NEGATIVE_TOKEN
        positions = [i for i, token in enumerate(sample.tokens) if token in frequent]
        query = tuple(marker if token in frequent else token for token in sample.query_tokens)
        return _rebuild(_replace_positions(sample, positions, marker, query_tokens=query))

    raise UnsupportedTask(Task.CODE_SEARCH.value, mode.value)


_SCHEMES = {
    Task.METHOD_NAME: noise_method_name,
    Task.VAR_MISUSE: noise_var_misuse,
    Task.CODE_TO_TEXT: noise_code_to_text,
    Task.CODE_SEARCH: noise_code_search,
}


def noise_sample(sample: Sample, directive: NoiseDirective, mode: NoiseMode) -> Sample:
    return _SCHEMES[sample.task](sample, directive, mode)


# ---------------------------------------------------------------------------
# planning

def _is_eligible(sample: Sample, mode: NoiseMode, corpus: Corpus) -> bool:
    if mode is NoiseMode.LABEL_SWAP:
        return len(corpus.label_pool - {sample.target_label}) > 0
    if mode is NoiseMode.STMT_DELETE:
        return len(sample.statements) >= 2
    if mode is NoiseMode.NAME_LEAK:
        return bool(sample.variables) and bool(sample.target_label)
    if mode is NoiseMode.OUTPUT_FLIP:
        if sample.bug_meta is None:
            return False
        if sample.is_buggy:
            return True
        return any(_fake_bug_locations(sample, name) for name in sample.variables)
    if mode is NoiseMode.INPUT_CUES:
        return sample.bug_meta is not None
    if mode is NoiseMode.DOC_SWAP:
        return len(corpus.docstring_pool - {sample.target_tokens}) > 0
    if mode is NoiseMode.MASK_OVERLAP:
        return bool(_masked_positions(sample))
    return True


def _pick(rng: np.random.Generator, options: Sequence):
    return options[int(rng.integers(len(options)))]


def _draw_directive(
    sample: Sample, mode: NoiseMode, corpus: Corpus, rng: np.random.Generator, top_k: int
) -> NoiseDirective:
    if mode is NoiseMode.LABEL_SWAP:
        return NoiseDirective(new_label=_pick(rng, sorted(corpus.label_pool - {sample.target_label})))
    if mode is NoiseMode.STMT_DELETE:
        return NoiseDirective(statement_index=int(rng.integers(len(sample.statements))))
    if mode is NoiseMode.NAME_LEAK:
        return NoiseDirective(variable=most_frequent_variable(sample))
    if mode is NoiseMode.OUTPUT_FLIP and not sample.is_buggy:
        usable = [name for name in sample.variables if _fake_bug_locations(sample, name)]
        variable = _pick(rng, usable)
        return NoiseDirective(variable=variable, error_location=_pick(rng, _fake_bug_locations(sample, variable)))
    if mode is NoiseMode.DOC_SWAP:
        return NoiseDirective(new_docstring=_pick(rng, sorted(corpus.docstring_pool - {sample.target_tokens})))
    if mode is NoiseMode.IDENTITY_TOKENS:
        return NoiseDirective(top_k=top_k)
    return NoiseDirective()


def plan_noise(corpus: Corpus, rate: float, mode: NoiseMode, seed: int, top_k: Optional[int] = None) -> NoisePlan:
    """Choose which samples get noised and how, deterministically from the seed."""
    mode = NoiseMode(mode)
    if not validate_rate(rate):
        raise ConfigError(f"noise rate {rate} outside [0, 1]")
    if mode not in MODES_BY_TASK[corpus.task]:
        raise UnsupportedTask(corpus.task.value, mode.value)
    top_k = top_k or get_settings().IDENTITY_TOP_K

    rng = make_rng(seed)
    selected = set()
    requested_by_class, selected_by_class, shortfall_by_class = {}, {}, {}
    for stratum, group in corpus.strata().items():
        eligible = [sample for sample in group if _is_eligible(sample, mode, corpus)]
        requested = round_half_up(rate, len(group))
        take = min(requested, len(eligible))
        if take:
            picks = rng.choice(len(eligible), size=take, replace=False)
            selected.update(eligible[int(i)].id for i in picks)
        requested_by_class[stratum] = requested
        selected_by_class[stratum] = take
        shortfall_by_class[stratum] = requested - take
        if requested > take:
            logger.warning(f"{mode.value}: only {take} of {requested} requested '{stratum}' samples are eligible")

    directives = {
        sample.id: _draw_directive(sample, mode, corpus, rng, top_k)
        for sample in corpus.samples
        if sample.id in selected
    }
    plan = NoisePlan(
        seed=seed,
        rate=rate,
        mode=mode,
        selected=frozenset(selected),
        directives=directives,
        shortfall=sum(shortfall_by_class.values()),
        requested_by_class=requested_by_class,
        selected_by_class=selected_by_class,
        shortfall_by_class=shortfall_by_class,
    )
    logger.info(f"Planned {mode.value} at rate {rate:g}: {len(selected)} selected, shortfall {plan.shortfall}")
    return plan


def apply(corpus: Corpus, plan: NoisePlan, workers: int = 1) -> Corpus:
    """Apply a plan; unselected samples pass through untouched, order is kept."""
    missing = set(plan.selected) - set(corpus.by_id)
    if missing:
        raise StalePlanError(missing)
    if plan.mode not in MODES_BY_TASK[corpus.task]:
        raise UnsupportedTask(corpus.task.value, plan.mode.value)

    def _one(sample: Sample) -> Sample:
        if sample.id not in plan.selected:
            return sample
        return noise_sample(sample, plan.directives.get(sample.id, NoiseDirective()), plan.mode)

    if workers > 1 and plan.selected:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            samples = list(executor.map(_one, corpus.samples))
    else:
        samples = [_one(sample) for sample in corpus.samples]
    return corpus.replace_samples(samples)


def manifest_path(corpus_path) -> Path:
    corpus_path = Path(corpus_path)
    return corpus_path.with_name(corpus_path.stem + ".manifest.json")


def write_noisy_corpus(corpus: Corpus, plan: NoisePlan, path) -> Tuple[Path, Path]:
    """Write the noisy corpus and its provenance manifest next to it."""
    path = Path(path)
    write_corpus(corpus, path)
    sidecar = manifest_path(path)
    try:
        sidecar.write_text(json.dumps(plan.manifest(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoFailure(sidecar, str(e)) from e
    return path, sidecar
