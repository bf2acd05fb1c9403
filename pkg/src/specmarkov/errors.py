"""Exception types shared across the package.

The CLI maps these onto exit codes: ``ConfigError`` -> 2, ``DataError`` -> 3,
``DivergenceError`` -> 4.
"""


class ConfigError(ValueError):
    """Invalid experiment configuration or argument combination."""


class DataError(ValueError):
    """Input data that cannot be used (malformed file, trace too short...)."""


class TraceFormatError(DataError):
    """A trace file failed to parse."""

    def __init__(self, path, line, token, reason):
        self.path = str(path)
        self.line = line
        self.token = token
        super().__init__(f"{self.path}:{line}: {reason} (token {token!r})")


class DivergenceError(ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"loss became non-finite ({loss}) at epoch {epoch}")
