"""Exception and warning types shared across the package."""


class QbsError(Exception):
    """Base class for all simulator errors."""

    code = "E_QBS"


class ValidationError(QbsError, ValueError):
    """Malformed input: bad arguments, schema violations, unknown labels."""

    code = "E_VALIDATION"


class LayoutMismatchError(ValidationError):
    code = "E_LAYOUT"


class CutoffExceededError(ValidationError):
    """A Fock index lies above the truncation cutoff."""

    code = "E_CUTOFF"


class TruncationError(ValidationError):
    """The truncated space captures too little of the requested state.

    ``captured`` is the retained probability weight.
    """

    code = "E_TRUNCATION"

    def __init__(self, message, captured=None):
        super().__init__(message)
        self.captured = captured


class NumericalInvariantError(QbsError, ArithmeticError):
    """Trace drift, loss of positivity or Hermiticity during a computation."""

    code = "E_NUMERIC"


class IllConditionedError(NumericalInvariantError):
    code = "E_ILL_CONDITIONED"


class ImpossibleBranchError(QbsError):
    """Post-selection on an outcome whose probability is below 1e-12."""

    code = "E_IMPOSSIBLE_BRANCH"


class TruncationWarning(UserWarning):
    """Emitted when a displacement pushes weight past the cutoff."""


class OutputError(QbsError, OSError):
    """Writing or reading a file failed; the message carries the path."""

    code = "E_IO"
