"""Exception hierarchy shared by all modules."""


class KropinaError(Exception):
    """Base class for every error raised by this package."""


class InputError(KropinaError, ValueError):
    """Malformed or non-finite input."""


class ValidationError(KropinaError, ValueError):
    """Input data violates a structural constraint (unit wind, Killing identities, ...)."""


class ChartDomainError(KropinaError, ValueError):
    """A point lies outside the validity region of its chart."""


class OutsideConicDomainError(KropinaError, ValueError):
    """A tangent vector lies outside the conic domain ``beta > 0``.

    Recoverable: callers that sample directions are expected to catch this
    and filter.
    """


class BoundaryProximityError(OutsideConicDomainError):
    """A finite-difference stencil would leave the conic domain."""


class DegenerateFlagError(KropinaError, ValueError):
    """Flagpole and transverse edge (or a plane) are numerically parallel."""


class SamplingError(KropinaError, RuntimeError):
    """Random sampling failed to produce admissible data."""
