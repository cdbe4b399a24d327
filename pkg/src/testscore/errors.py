"""Exception types raised across the package."""


class TestScoreError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(TestScoreError, ValueError):
    pass


class InfeasibleItemError(TestScoreError, ValueError):
    """An item costs more than the budget, so it can never be selected."""


class DomainError(TestScoreError, ValueError):
    pass


class CapacityError(TestScoreError, RuntimeError):
    """An exact enumeration would exceed its configured term cap."""


class UnboundedSupportError(TestScoreError, ValueError):
    pass


class UndefinedBoundError(TestScoreError, ValueError):
    pass


class ProtocolError(TestScoreError, ValueError):
    pass


class DumpParseError(TestScoreError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
