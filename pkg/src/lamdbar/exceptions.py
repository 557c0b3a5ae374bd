"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation (e.g. |z| >= 1)."""


class ConfigError(ValueError):
    """A configuration violates a precondition of one of the solvers."""


class NumericalCheckError(RuntimeError):
    """A numerical verification failed; ``witness`` carries the offending data."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
