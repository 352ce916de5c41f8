"""Exception types raised across the package."""


class GBLError(Exception):
    """Base class for all package errors."""


class DegenerateState(GBLError, ValueError):
    """Flux evaluated at the corner u = phi = 0 where the denominator vanishes."""


class NoRoot(GBLError, ArithmeticError):
    """A bracketing root search failed to find a sign change."""


class MobilityOutOfRange(GBLError, ValueError):
    """The viscosity ratio M is outside the range an operation supports."""


class InvalidState(GBLError, ValueError):
    """A state violates 0 <= u <= phi, phi > 0."""


class CFLViolation(GBLError, ValueError):
    pass


class NonConservativeUnsupported(GBLError, ValueError):
    pass


class TapeConsumed(GBLError, RuntimeError):
    """A recorded forward pass was swept backwards twice."""


class ShapeMismatch(GBLError, ValueError):
    pass


class ContextMismatch(GBLError, ValueError):
    pass


class DivergenceDetected(GBLError, FloatingPointError):
    pass


class GridMismatch(GBLError, ValueError):
    pass
