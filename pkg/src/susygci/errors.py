class UsageError(ValueError):
    """Caller violated a documented precondition."""


class NotPositiveDefiniteError(ValueError):
    pass


class DegenerateBoundaryError(ValueError):
    """Heaviside expansion requested exactly on the boundary ``a == 0``."""


class NumericError(RuntimeError):
    """A quadrature or sampling routine failed to reach its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(ValueError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
