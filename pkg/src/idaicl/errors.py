"""Exception hierarchy for the calibration engine.

Two broad families matter to callers:

* validation / data errors (bad shapes, bad files, bad indices) -- these
  map to CLI exit code 2,
* numeric errors raised during otherwise well-formed computations
  (non-positive adjusted scores, failed factorizations) -- exit code 3.
"""

from __future__ import annotations


class IdaiclError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(IdaiclError, ValueError):
    """Input violates a documented precondition or type invariant."""


class DimensionMismatch(ValidationError):
    """Array shape disagrees with the declared dimensionality."""


class NonFiniteValue(ValidationError):
    """NaN or infinity where a finite value is required."""


class DuplicateCandidate(ValidationError):
    """Candidate token list contains a repeated vocabulary index."""


class CandidateOutOfRange(ValidationError):
    """Candidate token index falls outside the vocabulary."""


class TokenOutOfRange(ValidationError):
    """Vocabulary token index falls outside the head's rows."""


class EmptyInput(ValidationError):
    """A non-empty collection was required."""


class EmptyScores(ValidationError):
    """Decision requested over an empty score vector."""


class LengthMismatch(ValidationError):
    """Two aligned sequences have different lengths."""


class IndexOutOfRange(ValidationError):
    """Class label index outside [0, num_classes)."""


class InvalidSpec(ValidationError):
    """Synthetic task specification violates its constraints."""


class NumericError(IdaiclError, ArithmeticError):
    """A computation failed for numeric rather than structural reasons."""


class NonPositiveAdjusted(NumericError):
    """Linear-domain score became <= 0 after prior adjustment.

    Signals that tau is too large for the score scale.  ``index`` is the
    offending candidate position.
    """

    def __init__(self, index: int, value: float):
        self.index = int(index)
        self.value = float(value)
        super().__init__(
            f"adjusted linear score {value!r} <= 0 at candidate index {index}; "
            "tau is too large for this score scale"
        )


class FactorizationFailure(NumericError):
    """Covariance could not be factorized even after ridge escalation."""


class InvalidBundle(IdaiclError, ValueError):
    """Bundle directory contents are malformed.  ``field`` names the offender."""

    def __init__(self, field: str, detail: str = ""):
        self.field = field
        msg = f"invalid bundle: {field}"
        if detail:
            msg = f"{msg} ({detail})"
        super().__init__(msg)


class IoError(IdaiclError, OSError):
    """Filesystem-level failure while reading or writing a bundle."""
