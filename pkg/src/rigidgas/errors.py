"""Exception types shared across the package."""


class RigidGasError(Exception):
    """Base class for all package errors."""


class InvalidSpec(RigidGasError):
    """Body specification is malformed (non-positive radius, bad coefficients...)."""


class ConvexityViolation(RigidGasError):
    """Support function fails the strict convexity test h + h'' > 0."""


class NoConvergence(RigidGasError):
    """An iterative geometric solver exceeded its iteration cap."""


class DegenerateVelocity(RigidGasError):
    """Relative velocity too small for an escape-time bound."""


class PackingFailure(RigidGasError):
    """Could not place all atoms without overlap; parameters too dense."""


class OverlapDetected(RigidGasError):
    """Hard invariant breach: overlapping particles inside the event loop."""


class EnvelopeBreach(RigidGasError):
    """A thinning proposal exceeded its dominating envelope (internal bug)."""


class InsufficientData(RigidGasError):
    """Statistic requested on a record that is too short."""


class ConfigError(RigidGasError):
    """Run configuration failed validation."""
