"""Exceptions raised by gedmrg."""


class GedmrgError(RuntimeError):
    """Base class for all gedmrg failures."""


class DenseLimitError(GedmrgError, ValueError):
    """A dense representation would exceed the configured size limit."""


class NonCanonicalError(GedmrgError, ValueError):
    """An operation needs a state in mixed-canonical form."""


class NotPositiveDefiniteError(GedmrgError, ArithmeticError):
    """Conjugate gradient met non-positive curvature."""


class NonHermitianError(GedmrgError, ArithmeticError):
    """An operator failed a Hermiticity check."""


class StaleEnvironmentError(GedmrgError):
    """An effective-operator applier was used after its environment changed."""


class SerializationError(GedmrgError, ValueError):
    """A serialized network file has a wrong header or is corrupt."""


class ConvergenceError(GedmrgError):
    """An inner solver failed to converge inside a sweep.

    Attributes:
        position: Left site of the two-site block being optimized.
        sweep: Sweep index (0-based).
    """

    def __init__(self, message: str, position: int = -1, sweep: int = -1) -> None:
        super().__init__(message)
        self.position = position
        self.sweep = sweep
