"""Exception hierarchy for the vtwin simulator."""


class VtwinError(Exception):
    """Base class for all simulator errors."""


class MalformedMap(VtwinError):
    """Map input violates the schema (bad polygon, height, material...)."""


class UnknownVehicleKind(VtwinError):
    """A vehicle id refers to a kind that is not in the catalog."""


class OvercrowdedNetwork(VtwinError):
    """Requested vehicle count cannot be placed with safe spacing."""


class MalformedTrace(VtwinError):
    """Trace violates timing, continuity, or conservation rules."""


class OutOfRange(VtwinError):
    """Requested time lies outside the trace's recorded span."""


class NumericalFailure(VtwinError):
    """A filter covariance lost positive definiteness."""


class LengthMismatch(VtwinError):
    """Paired sequences have different lengths."""


class DimensionMismatch(VtwinError):
    """Vector shapes are incompatible."""


class NegativeBudget(VtwinError):
    """Latency budget is non-positive after subtracting pipeline stages."""


class LinkSetMismatch(VtwinError):
    """Two per-link tables do not cover the same links."""


class NoFeasibleConfig(VtwinError):
    """No candidate simulator configuration fits the latency budget."""


class EmptyNetwork(VtwinError):
    """An optimizer was invoked with no users, no transmitters, or no beams."""


class SearchSpaceTooLarge(VtwinError):
    """Exhaustive enumeration would exceed the configured cap."""


class UnsupportedScene(VtwinError):
    """Reference oracle invoked on a scene outside its supported class."""


class ConfigError(VtwinError):
    """Episode or CLI configuration is missing, malformed, or inconsistent."""
