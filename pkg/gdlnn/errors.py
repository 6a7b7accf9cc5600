"""Exception hierarchy shared by every gdlnn module.

Each class carries the exit code the CLI reports for it.
"""

from typing import Optional


class GDLNNError(Exception):
    """Base class for all gdlnn errors."""

    exit_code = 1


class ConfigError(GDLNNError):
    """Invalid configuration or command-line flags."""

    exit_code = 2


class DataError(GDLNNError):
    """Unreadable or inconsistent input data."""

    exit_code = 3


class BudgetExceeded(GDLNNError):
    """The matcher visited more partial assignments than allowed."""

    exit_code = 4

    def __init__(self, budget: int, context: str = ""):
        self.budget = budget
        self.context = context
        message = f"match budget of {budget} steps exceeded"
        if context:
            message += f" ({context})"
        super().__init__(message)

    def __reduce__(self):
        return (BudgetExceeded, (self.budget, self.context))


class MatchError(GDLNNError, ValueError):
    """Matcher called with arguments that violate its preconditions."""


class GDLSyntaxError(DataError):
    """GDL text that does not follow the grammar."""

    def __init__(self, message: str, line: int, column: int):
        self.reason = message
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")

    def __reduce__(self):
        return (type(self), (self.reason, self.line, self.column))


class ProgramError(DataError):
    """A GDL program violating one of its structural invariants."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.reason = message
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

    def __reduce__(self):
        return (type(self), (self.reason, self.line))


class UndeclaredVariableError(ProgramError):
    pass


class DuplicateVariableError(ProgramError):
    pass


class DuplicateEdgeError(ProgramError):
    pass


class InvalidIntervalError(ProgramError):
    pass


class DimensionMismatchError(DataError):
    pass


class GraphError(DataError):
    pass


class SchemaError(DataError):
    pass


class ModelFormatError(DataError):
    pass


class ModelVersionError(ModelFormatError):
    pass


class TrainingError(DataError):
    pass
