"""Exception types shared across the package."""


class SelabelError(Exception):
    """Base class for all package errors."""


class ValidationError(SelabelError):
    """Invalid input: bad config values, out-of-range scores, empty data."""


class SchemaError(SelabelError):
    """Structural mismatch, e.g. feature vector length != corpus feature_dim."""


class ParseError(SelabelError):
    """Malformed serialized record; message carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class NotFoundError(SelabelError):
    """Unknown document or candidate id."""


class DegenerateDataError(SelabelError):
    """Training data with only one class."""


class DivergenceError(SelabelError):
    """Training produced a non-finite loss; message names the epoch."""


class BudgetExhaustedError(SelabelError):
    """Annotation budget cannot cover the requested charge."""


class DuplicateQuestionError(SelabelError):
    """Candidate already has a label; asking again is forbidden."""


class DuplicateDocumentError(SelabelError):
    """Document was already fully labeled."""


class ConsistencyError(SelabelError):
    """Internal protocol violation, e.g. calibrators fitted for a different model round."""
