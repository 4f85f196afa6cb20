"""Exception hierarchy. CLI exit codes are keyed off these classes."""


class RefreshError(Exception):
    """Base class for all library errors."""


class ConfigError(RefreshError):
    """Invalid run configuration or parameter (CLI exit code 2)."""


class DataError(RefreshError):
    """Problem with an input dataset (CLI exit code 3)."""


class SchemaError(DataError):
    """CSV header missing or inconsistent with the declared column roles."""


class ParseError(DataError):
    """Malformed CSV row."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class ValidationError(DataError):
    """Values present but semantically invalid (e.g. non-binary labels)."""


class TrainingError(RefreshError):
    """Model fitting failed (empty subset, divergence, single class)."""


class InputFormatError(RefreshError):
    """Malformed downstream input such as a results CSV (CLI exit code 4)."""
