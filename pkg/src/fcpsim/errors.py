"""Exception hierarchy shared across the package."""


class FcpError(Exception):
    """Base class for all package errors."""


class InvalidMatrix(FcpError, ValueError):
    """Transition matrix is not row-stochastic or has the wrong shape."""


class InvalidDistribution(FcpError, ValueError):
    """Probability vector is negative, unnormalized or mis-sized."""


class NotIrreducible(FcpError):
    """Operation requires a single closed communicating class."""


class NoReachableBlock(FcpError):
    """No closed class carries initial mass."""


class UnsupportedStructure(FcpError):
    """Chain structure is outside what a closed-form oracle covers."""


class DomainError(FcpError, ValueError):
    """Argument lies outside the domain of a transform or density."""


class SingularSystem(FcpError, ArithmeticError):
    """Montroll-Weiss linear system is numerically singular."""


class ContourFailure(FcpError, ArithmeticError):
    """Non-finite transform values met on the inversion contour."""


class BranchError(FcpError, ArithmeticError):
    """A square-root radicand crossed the principal branch cut."""


class ExponentOrder(FcpError, ValueError):
    """Tail law requires the first exponent to exceed the second."""


class InvalidBarrier(FcpError, ValueError):
    """Starting position is not below the absorbing barrier."""


class InvalidLaw(FcpError, ValueError):
    """Waiting-time or jump law parameters out of range."""
