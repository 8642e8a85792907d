"""Exception types shared across the package."""


class InvalidModelError(ValueError):
    """A structural model or dataset violates its invariants."""


class NumericalError(RuntimeError):
    """A factorization, eigen-solve or integration failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class InitializationError(NumericalError):
    """The objective is not finite at the starting point."""


class TmcmcError(NumericalError):
    """Tempering did not reach beta = 1; carries the partial result."""

    def __init__(self, message, partial=None, diagnostics=None):
        super().__init__(message, diagnostics)
        self.partial = partial


class ConfigError(ValueError):
    """Experiment configuration could not be parsed or validated."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
