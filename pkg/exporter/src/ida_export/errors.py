"""Exception hierarchy for the bundle exporter.

Spec-side problems (bad JSON, bad template, labels that do not tokenize
to a single token) map to CLI exit code 2; model loading failures map
to exit code 3.
"""

from __future__ import annotations


class ExportError(Exception):
    """Base class for every error raised by this package."""


class SpecError(ExportError, ValueError):
    """Export specification violates a documented constraint."""


class TemplateError(SpecError):
    """Template string is missing or misusing its slots."""


class TokenizationError(ExportError, ValueError):
    """A candidate label word does not map to exactly one token.

    ``word`` is the offending label word.
    """

    def __init__(self, word: str, detail: str):
        self.word = word
        super().__init__(f"label word {word!r} {detail}")


class ModelLoadError(ExportError, RuntimeError):
    """Model or tokenizer could not be loaded from the given identifier."""


class IoError(ExportError, OSError):
    """Filesystem-level failure while reading a spec or writing a bundle."""
