"""Exception hierarchy. Each family maps to one CLI exit code."""


class ScoutError(Exception):
    exit_code = 1


class ConfigError(ScoutError, ValueError):
    exit_code = 1


class DataError(ScoutError, ValueError):
    exit_code = 2


class SchemaError(DataError):
    """A required column or key is missing, or the file shape is wrong."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ParseError(DataError):
    def __init__(self, message, row=None, field=None):
        super().__init__(message)
        self.row = row
        self.field = field


class DuplicateRecordError(DataError):
    pass


class ValidationError(DataError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"dataset failed validation: {lines}{more}")


class LabelError(DataError):
    pass


class IneligibleRecordError(DataError):
    """Record has too few minutes to build per-90 features."""


class NumericalError(ScoutError, ArithmeticError):
    exit_code = 3
