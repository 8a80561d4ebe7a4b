"""Memorization diagnostics for code-intelligence corpora."""

__version__ = "1.0.0"
