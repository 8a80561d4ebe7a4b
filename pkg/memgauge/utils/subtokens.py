"""Sub-token splitting shared by the normalizer, the noising schemes, the
metrics and the reference model.

An identifier is split on underscores (and any other non-alphanumeric
character), on lower-to-upper camel boundaries and on letter/digit
boundaries; the pieces are lowercased. ``getHTTP2Response`` becomes
``["get", "http", "2", "response"]``. Punctuation-only tokens have no
sub-tokens.
"""
import re
from typing import List

_SEPARATORS = re.compile(r'[^A-Za-z0-9]+')
_CAMEL = re.compile(r'(?<=[a-z])(?=[A-Z])')
_LETTER_DIGIT = re.compile(r'(?<=[A-Za-z])(?=[0-9])|(?<=[0-9])(?=[A-Za-z])')


def split_subtokens(token: str) -> List[str]:
    pieces = []
    for chunk in _SEPARATORS.split(token):
        if not chunk:
            continue
        chunk = _CAMEL.sub(" ", chunk)
        chunk = _LETTER_DIGIT.sub(" ", chunk)
        pieces.extend(part.lower() for part in chunk.split())
    return pieces


def normalized_form(token: str) -> str:
    """Lowercased concatenation of the sub-tokens ("" for punctuation)."""
    return "".join(split_subtokens(token))
