"""
Exception hierarchy for otmask.

Two families matter to callers:

- :class:`ValidationError`: the *input* is wrong (shape mismatch, NaN,
  malformed file, unknown token, oracle size exceeded).  The CLI maps
  it to exit status 1.
- :class:`InvariantError`: the *code* broke one of its own guarantees
  (a pixel left unassigned, an all-zero plan column, two predicted
  segments matching one ground-truth segment).  The CLI maps it to
  exit status 2.
"""


class OtMaskError(Exception):
    """Base class of every error raised by otmask."""


class ValidationError(OtMaskError):
    """Rejected input."""


class ShapeError(ValidationError):
    """Arrays or maps whose dimensions do not agree."""


class CodecError(ValidationError):
    """Malformed, truncated or invariant-violating file content."""


class NumericalError(ValidationError):
    """Non-finite intermediate values in a numeric solver.

    Raised instead of returning NaNs; the message says which setting
    to change (usually ``log_domain=True``).
    """


class InvariantError(OtMaskError):
    """An internal guarantee was violated."""
