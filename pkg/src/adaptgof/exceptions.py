class EstimationError(ValueError):
    """Raised when a parameter or subspace estimate cannot be computed."""


class DegenerateFitError(ValueError):
    """Raised when the fitted residuals are identically zero.

    The residual-marked process and its transform are undefined for a
    perfect fit, so the test refuses to produce a statistic.
    """


class IngestionError(ValueError):
    """Raised for malformed input files; the message names the row/column."""


class StageError(RuntimeError):
    """Wraps an error raised inside one stage of the testing pipeline."""

    def __init__(self, stage: str, error: Exception):
        self.stage = stage
        self.error = error
        super().__init__(f"[{stage}] {type(error).__name__}: {error}")


class StudyError(RuntimeError):
    """Raised when too many simulation replications fail."""
