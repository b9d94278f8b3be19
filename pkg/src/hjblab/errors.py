"""Exception hierarchy shared across the package.

Two families matter for the command line contract: configuration or
precondition problems (user error, exit code 2) and numerical failures
(a theory check did not hold or an iteration did not converge, exit
code 1).
"""


class ConfigError(ValueError):
    """Bad configuration, malformed input, or a violated precondition."""


class NumericalError(RuntimeError):
    """A numerical procedure failed: no certificate, divergence, NaN."""


class ExprParseError(ConfigError):
    """Expression source could not be parsed.

    Carries the character offset of the first offending position.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class UnknownIdentifierError(ExprParseError):
    pass


class ArityError(ExprParseError):
    pass


class UnboundVariableError(ConfigError):
    """Evaluation requested with a free variable missing from the bindings."""


class DomainFaultError(NumericalError):
    """Evaluation hit a numeric domain fault (log of a nonpositive value,
    zero to a negative power, division by zero, non-integer power of a
    negative base, overflow)."""

    def __init__(self, message: str, expression: str):
        super().__init__(f"{message} in '{expression}'")
        self.expression = expression
