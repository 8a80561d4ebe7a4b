# utils/validators.py

import re

FRESH_NAME_PATTERN = re.compile(r'^var[0-9]+$')
IDENTIFIER_PATTERN = re.compile(r'^[A-Za-z_$][A-Za-z0-9_$]*$')


def validate_fresh_name(name):
    """
    Check that a renaming target follows the var[0-9]+ format.

    Args:
        name (str): Candidate name

    Returns:
        bool: True if the name is a valid fresh name
    """
    return bool(FRESH_NAME_PATTERN.match(name))


def validate_identifier(token):
    """
    Check whether a lexical token is an identifier.

    Args:
        token (str): Token to test

    Returns:
        bool: True for identifiers such as ``count`` or ``_tmp1``
    """
    return bool(IDENTIFIER_PATTERN.match(token))


def validate_rate(rate):
    """
    Validate a noise rate.

    Args:
        rate (float): Fraction of samples to corrupt

    Returns:
        bool: True if 0 <= rate <= 1
    """
    try:
        value = float(rate)
    except (TypeError, ValueError):
        return False
    return 0.0 <= value <= 1.0
