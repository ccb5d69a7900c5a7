"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """Raised when an argument violates an operation's precondition."""


class NumericFailure(ArithmeticError):
    """Raised when a decomposition fails to converge or a system is singular."""


class BudgetExhausted(RuntimeError):
    """Raised when an environment is asked for more draws than remain."""


class ParseError(ValueError):
    """Malformed input file. ``lineno`` is 1-based when known."""

    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)
