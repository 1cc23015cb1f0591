"""Exception types raised by the numerical stages."""


class MarchenkoError(Exception):
    """Base class for all package errors."""


class DomainError(MarchenkoError, ValueError):
    """An argument lies outside the domain an operation supports."""


class NonConvergence(MarchenkoError, ArithmeticError):
    """A series or iteration did not reach its tolerance."""


class ConvergenceFailure(NonConvergence):
    """Root finding for quadrature nodes did not converge."""


class BranchAmbiguity(MarchenkoError):
    """Phase samples are too coarse to be unwrapped unambiguously."""


class FitFailure(MarchenkoError):
    """A least-squares fit left residuals above tolerance."""


class AccuracyLoss(MarchenkoError):
    """An internal consistency check exceeded its budget."""


class KernelRangeError(MarchenkoError, ValueError):
    """The kernel was evaluated outside its validated domain."""


class SingularSystem(MarchenkoError, ArithmeticError):
    """A triangular factor has a vanishing pivot."""


class ResidualExceeded(MarchenkoError):
    """Off-node residual of the integral equation is above tolerance."""
