"""Exception types shared across the package."""


class MvaSlamError(Exception):
    """Base class for all package-specific errors."""


class DegenerateMVA(MvaSlamError):
    """Raised when an MVA sits too close to the origin to define a surface."""


class SizeLimit(MvaSlamError):
    """Raised when an exact-enumeration routine is asked to exceed its size cap."""


class ConfigError(MvaSlamError):
    """Raised when a configuration file or dict fails validation."""
