"""Exception hierarchy shared by every adatriv module."""


class AdatrivError(Exception):
    """Base class for all library errors."""


class DimensionError(AdatrivError, ValueError):
    """Shapes do not match or a square matrix was required."""


class DomainError(AdatrivError, ValueError):
    """Input outside the domain of an operation (non-finite, off-manifold, ...)."""


class BranchError(DomainError):
    """Injectivity / principal-branch violation.

    The trivialization engine treats this as the restart signal.
    """


class SingularityError(AdatrivError, ArithmeticError):
    """A matrix that has to be inverted is (numerically) singular."""


class ConvergenceError(AdatrivError, RuntimeError):
    """An iterative method ran out of iterations."""


class ConfigurationError(AdatrivError, ValueError):
    """Missing or inconsistent configuration."""


class UnsupportedError(AdatrivError, NotImplementedError):
    """Operation is not defined for this manifold kind."""


class TraceWriteError(AdatrivError, OSError):
    """A trace or summary file could not be written."""
