#services/corpus.py

"""Corpus schema I/O and the heuristic source normalizer.

The normalizer is a lexical stand-in for a real parser:

* the lexer emits identifiers, numbers, string literals and punctuation
  (multi-character operators such as ``==`` or ``+=`` stay whole) and drops
  whitespace and ``//``, ``/* */`` and ``#`` comments;
* statements are the spans of the method body (everything after the first
  ``{``) terminated by ``;`` outside parentheses, or cut at ``{`` / ``}``;
  brace-free sources (Python style) use one statement per line after the
  header line;
* an identifier is a variable when it follows a type keyword, when it starts
  a statement and is followed by ``=``, or when it closes a parameter of the
  first parenthesized list of the header.
"""

import logging
import re
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from memgauge.config import get_settings
from memgauge.errors import (
    DuplicateId,
    EmptyTokenStream,
    IoFailure,
    SchemaViolation,
    TaskMismatch,
    UnbalancedDelimiters,
)
from memgauge.models.sample import BugMeta, Corpus, Sample, Task
from memgauge.utils.validators import validate_identifier

logger = logging.getLogger("memgauge")

_TOKEN_PATTERN = re.compile(
    r"""
    (?P<newline>\n)
  | (?P<space>[ \t\r\f\v]+)
  | (?P<comment>//[^\n]*|/\*.*?\*/|\#[^\n]*)
  | (?P<string>"(?:\\.|[^"\\\n])*"|'(?:\\.|[^'\\\n])*')
  | (?P<number>0[xX][0-9a-fA-F]+|\d+(?:\.\d+)?(?:[eE][+-]?\d+)?[fFlLdD]?)
  | (?P<identifier>[A-Za-z_$][A-Za-z0-9_$]*)
  | (?P<operator>>>>=|===|!==|<<=|>>=|>>>|\+\+|--|&&|\|\||==|!=|<=|>=|\+=|-=|\*=|/=|%=|&=|\|=|\^=|->|::|=>)
  | (?P<punct>\S)
    """,
    re.VERBOSE | re.DOTALL,
)

_OPENERS = frozenset("([{<")
_CLOSERS = frozenset(")]}>")


def lex(raw_code: str) -> Tuple[List[str], List[int]]:
    """Split source text into tokens; also returns each token's line number."""
    tokens: List[str] = []
    lines: List[int] = []
    line = 0
    for match in _TOKEN_PATTERN.finditer(raw_code):
        kind = match.lastgroup
        text = match.group()
        if kind == "newline":
            line += 1
        elif kind == "comment":
            line += text.count("\n")
        elif kind != "space":
            tokens.append(text)
            lines.append(line)
    return tokens, lines


def _check_braces(tokens: Sequence[str]) -> None:
    depth = 0
    for index, token in enumerate(tokens):
        if token == "{":
            depth += 1
        elif token == "}":
            depth -= 1
            if depth < 0:
                raise UnbalancedDelimiters(index)


def _segment_braced(tokens: Sequence[str], body_start: int) -> List[Tuple[int, int]]:
    spans = []
    pending: Optional[int] = None
    parens = 0
    for index in range(body_start, len(tokens)):
        token = tokens[index]
        if token == ";" and parens == 0:
            if pending is not None:
                spans.append((pending, index + 1))
                pending = None
        elif token == "{":
            if pending is not None:
                spans.append((pending, index))
                pending = None
            parens = 0
        elif token == "}":
            if pending is not None:
                spans.append((pending, index))
                pending = None
            parens = 0
        else:
            if pending is None:
                pending = index
            if token == "(":
                parens += 1
            elif token == ")" and parens > 0:
                parens -= 1
    if pending is not None:
        spans.append((pending, len(tokens)))
    return spans


def _segment_lines(tokens: Sequence[str], lines: Sequence[int], body_start: int) -> List[Tuple[int, int]]:
    spans = []
    start: Optional[int] = None
    for index in range(body_start, len(tokens)):
        if start is None:
            start = index
        last = index + 1 == len(tokens)
        if last or lines[index + 1] != lines[index] or tokens[index] == ";":
            spans.append((start, index + 1))
            start = None
    return spans


def _parameter_names(header: Sequence[str], type_keywords) -> List[str]:
    try:
        open_index = header.index("(")
    except ValueError:
        return []
    names = []
    segment: List[str] = []
    depth = 0
    for token in header[open_index + 1:]:
        if token in _OPENERS:
            depth += 1
        elif token in _CLOSERS:
            if depth == 0 and token == ")":
                names.append(segment)
                break
            depth -= 1
        elif token == "," and depth == 0:
            names.append(segment)
            segment = []
            continue
        if depth == 0:
            segment.append(token)
    result = []
    for part in names:
        if "=" in part:
            part = part[:part.index("=")]
        identifiers = [t for t in part if validate_identifier(t) and t not in type_keywords]
        if identifiers:
            result.append(identifiers[-1])
    return result


def _detect_variables(
    tokens: Sequence[str],
    header_end: int,
    statement_starts: Iterable[int],
    type_keywords,
) -> Dict[str, Tuple[int, ...]]:
    names = set(_parameter_names(tokens[:header_end], type_keywords))
    for index in range(1, len(tokens)):
        token = tokens[index]
        if (
            tokens[index - 1] in type_keywords
            and validate_identifier(token)
            and token not in type_keywords
            and (index + 1 == len(tokens) or tokens[index + 1] != "(")
        ):
            names.add(token)
    for start in statement_starts:
        if start + 1 < len(tokens) and validate_identifier(tokens[start]) and tokens[start + 1] == "=":
            names.add(tokens[start])

    occurrences: Dict[str, List[int]] = {}
    for index, token in enumerate(tokens):
        if token in names:
            occurrences.setdefault(token, []).append(index)
    # dicts keep first-occurrence order
    return {name: tuple(positions) for name, positions in occurrences.items()}


def normalize_source(
    raw_code: str,
    task: Task,
    id: str,
    *,
    target_label: str = "",
    target_tokens: Sequence[str] = (),
    query_tokens: Sequence[str] = (),
    bug_meta: Optional[BugMeta] = None,
) -> Sample:
    """Turn raw code into a normalized Sample (deterministic in its inputs)."""
    task = Task(task)
    tokens, lines = lex(raw_code)
    if not tokens:
        raise EmptyTokenStream(id)
    _check_braces(tokens)

    type_keywords = frozenset(get_settings().TYPE_KEYWORDS)
    if "{" in tokens:
        body_start = tokens.index("{") + 1
        spans = _segment_braced(tokens, body_start)
    else:
        body_start = next((i for i, line in enumerate(lines) if line != lines[0]), len(tokens))
        spans = _segment_lines(tokens, lines, body_start)

    variables = _detect_variables(tokens, body_start, [start for start, _ in spans], type_keywords)
    if task is Task.VAR_MISUSE and bug_meta is None:
        bug_meta = BugMeta(is_buggy=False)

    try:
        return Sample(
            id=id,
            task=task,
            tokens=tuple(tokens),
            statements=tuple(spans) if task is Task.METHOD_NAME else (),
            variables=variables,
            target_label=target_label,
            target_tokens=tuple(target_tokens),
            bug_meta=bug_meta,
            query_tokens=tuple(query_tokens),
        )
    except ValidationError as e:
        raise schema_violation(e, line=None) from e


def schema_violation(error: ValidationError, line: Optional[int]) -> SchemaViolation:
    details = error.errors()[0]
    message = details.get("msg", "")
    if details.get("loc"):
        field = ".".join(str(part) for part in details["loc"])
    else:
        match = re.search(r"\[(\w+)\]", message)
        field = match.group(1) if match else "<record>"
    return SchemaViolation(line, field, message)


def parse_sample(text: str, line: Optional[int] = None) -> Sample:
    try:
        return Sample.model_validate_json(text)
    except ValidationError as e:
        raise schema_violation(e, line) from e


def load_corpus(path, task: Task) -> Corpus:
    """Read and validate a JSONL corpus file."""
    task = Task(task)
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8")
    except FileNotFoundError as e:
        raise IoFailure(path, "corpus file not found") from e
    except OSError as e:
        raise IoFailure(path, str(e)) from e

    samples: List[Sample] = []
    seen = set()
    with handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            sample = parse_sample(line, line_number)
            if sample.task is not task:
                raise TaskMismatch(task.value, sample.task.value, line_number)
            if sample.id in seen:
                raise DuplicateId(sample.id, line_number)
            seen.add(sample.id)
            samples.append(sample)

    logger.info(f"Loaded {len(samples)} {task.value} samples from {path}")
    return Corpus.from_samples(task, samples)


def write_corpus(corpus: Corpus, path) -> None:
    """Write a corpus as JSONL with keys in schema order."""
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="\n") as handle:
            for sample in corpus.samples:
                handle.write(sample.to_json())
                handle.write("\n")
    except OSError as e:
        raise IoFailure(path, str(e)) from e
    logger.info(f"Wrote {len(corpus)} samples to {path}")
