class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericalDegeneracyError(ArithmeticError):
    """A matrix that must be symmetric positive definite numerically is not."""


class ConfigError(ValueError):
    """An experiment or agent configuration failed validation.

    ``line`` is the 1-based line of the offending entry in the source file
    when known.
    """

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        prefix = ""
        if source is not None:
            prefix = f"{source}:"
        if line is not None:
            prefix = f"{prefix}{line}: "
        elif prefix:
            prefix = f"{prefix} "
        super().__init__(prefix + message)
        self.message = message
