"""Exception hierarchy shared by every module.

Each class carries the exit status the command-line frontend reports for it.
"""


class KnowTraceError(Exception):
    exit_code = 1


class ConfigError(KnowTraceError, ValueError):
    """Inconsistent model configuration or arguments."""

    exit_code = 2


class ParseError(KnowTraceError, ValueError):
    """Malformed model document."""

    exit_code = 4


class SchemaError(KnowTraceError, ValueError):
    """Input data does not match the expected columns or layout."""

    exit_code = 4


class AmbiguousColumnsError(SchemaError):
    pass


class EmptyDatasetError(SchemaError):
    pass


class AlignmentError(SchemaError):
    pass


class DegenerateError(KnowTraceError, ArithmeticError):
    """An observation has zero probability under the current parameters."""

    exit_code = 5

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class FitError(KnowTraceError, RuntimeError):
    exit_code = 5


class MetricError(KnowTraceError, ValueError):
    exit_code = 2
