"""Exception types shared across the package."""


class CylpatchError(Exception):
    """Base class for all package-specific errors."""


class SingularInputError(CylpatchError):
    """Kernel evaluated at (or too close to) a singular lattice point."""


class GeometryError(CylpatchError):
    """Invalid contour or patch: orientation, domain, or degeneracy."""


class GridMismatchError(CylpatchError):
    """Two grid fields with incompatible shape or extent."""


class BlowupError(CylpatchError):
    """A stage velocity exceeded the runaway guard during time stepping."""


class AreaDistortionError(CylpatchError):
    """Remeshing changed a contour area beyond the allowed tolerance."""


class CheckpointError(CylpatchError):
    """Checkpoint missing, malformed, or written with a different config."""


class ConfigError(CylpatchError):
    """Invalid run configuration or config file."""
