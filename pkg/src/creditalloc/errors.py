"""Exception hierarchy shared across the engine, oracles and CLI."""


class CreditAllocError(Exception):
    """Base class for all package errors."""


class PortfolioValidationError(CreditAllocError, ValueError):
    """Input data violates a model invariant.

    ``problems`` collects every offending item so that a single load reports
    all issues at once instead of the first one only.
    """

    def __init__(self, message, problems=None):
        self.problems = list(problems or [])
        if self.problems:
            message = message + "\n" + "\n".join("  - " + p for p in self.problems)
        super().__init__(message)


class PortfolioParseError(CreditAllocError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionError(CreditAllocError, ValueError):
    pass


class UnsupportedOrderError(CreditAllocError, ValueError):
    pass


class NumericalError(CreditAllocError, ArithmeticError):
    """Non-finite intermediate or failed quadrature."""


class TruncationError(NumericalError):
    """Truncated series produced a negative portfolio variance."""


class CapacityError(CreditAllocError, MemoryError):
    pass


class DegeneratePortfolioError(CreditAllocError, ValueError):
    pass
