"""Exception hierarchy.

Every numerical failure raised by the package derives from
:class:`SingdosError` so the CLI can map it to an exit code.
"""


class SingdosError(Exception):
    """Base class for all package errors."""


class UnsupportedDimensionError(SingdosError, ValueError):
    pass


class SingularPointError(SingdosError, ValueError):
    pass


class DomainError(SingdosError, ValueError):
    """A point lies outside the region where an object is defined."""


class InsufficientQuadratureError(SingdosError, ValueError):
    pass


class ShapeError(SingdosError, ValueError):
    pass


class OrderMismatchError(SingdosError):
    """Lower-degree components of a solution exceed tolerance."""


class UndefinedOrderError(SingdosError):
    pass


class NoContractionError(SingdosError):
    pass


class DivergenceError(SingdosError):
    pass


class PotentialRejectedError(SingdosError, ValueError):
    """Potential violates an integrability hypothesis."""


class NotInLpError(PotentialRejectedError):
    pass


class DivergentNormError(SingdosError):
    pass


class RangeError(SingdosError, ValueError):
    pass


class IntegrationFailureError(SingdosError):
    pass


class PreconditionError(SingdosError):
    pass


class CapacityError(SingdosError):
    pass


class BandError(SingdosError):
    """Requested window lies above the trustworthy band of the grid."""


class EmptySubspaceError(SingdosError, ValueError):
    pass


class SubspaceExhaustedError(SingdosError):
    pass


class DegenerateCoverError(SingdosError, ValueError):
    pass


class UndefinedProbeError(SingdosError, ValueError):
    pass


class HypothesisViolationError(SingdosError, ValueError):
    pass


class ParameterInfeasibleError(SingdosError):
    def __init__(self, message, rho_threshold=None):
        super().__init__(message)
        self.rho_threshold = rho_threshold


class InsufficientDataError(SingdosError, ValueError):
    pass


class SchemaError(SingdosError, ValueError):
    pass


class ConfigError(SingdosError, ValueError):
    """Configuration failed validation; ``line`` points into the source."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
