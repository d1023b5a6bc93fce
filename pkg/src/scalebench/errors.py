"""Exception types raised across scalebench."""

from __future__ import annotations


class ScalebenchError(Exception):
    """Base class for every error raised by this package."""


class OutOfBudget(ScalebenchError, MemoryError):
    """An allocation would push the meter above its byte budget."""

    def __init__(self, requested: int, current: int, budget: int):
        super().__init__(
            f"allocation of {requested} B exceeds budget "
            f"({current} B live, budget {budget} B)"
        )
        self.requested = requested
        self.current = current
        self.budget = budget


class AllMasked(ScalebenchError, ValueError):
    """A softmax row has every entry masked to -inf."""


class ZeroVector(ScalebenchError, ValueError):
    """Cosine distance requested for a vector with zero norm."""


class UnrecordedInput(ScalebenchError, KeyError):
    """A gradient was requested for a tensor the tape never watched."""


class NonPositiveDelta(ScalebenchError, ValueError):
    """Selective-scan step sizes must be strictly positive."""


class MalformedSession(ScalebenchError, ValueError):
    """A session document is missing required fields."""


class BadTokenId(ScalebenchError, ValueError):
    """A token id falls outside the vocabulary."""


class AllOOM(ScalebenchError, ValueError):
    """Every record for an architecture is out-of-memory."""


class InsufficientPoints(ScalebenchError, ValueError):
    """Too few finite points to fit the requested curve."""


class DegenerateDesign(ScalebenchError, ValueError):
    """The least-squares design matrix is rank deficient."""


class NotApplicable(ScalebenchError, ValueError):
    """Crossover requested for a curve without a positive quadratic term."""


class TooShort(ScalebenchError, ValueError):
    """A sequence is shorter than the metric requires."""


class SingleClass(ScalebenchError, ValueError):
    """A classification metric needs both positive and negative labels."""


class MissingArtifact(ScalebenchError, FileNotFoundError):
    """A pipeline output needed by the report is absent."""


class StageError(ScalebenchError):
    """Wraps the first failure of a pipeline stage, tagged with its name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
