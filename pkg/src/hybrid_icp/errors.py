"""Exception types raised across the package."""


class HybridIcpError(Exception):
    """Base class for all package errors."""


class SingularInformation(HybridIcpError):
    """Summed information matrix of a fusion problem is not invertible."""


class EmptyRender(HybridIcpError):
    """A render produced no covered pixel."""


class MeshFormatError(HybridIcpError):
    """A mesh file could not be parsed."""


class DegenerateConfiguration(HybridIcpError):
    """Point-to-point correspondences do not determine a rotation."""


class SingularSystem(HybridIcpError):
    """Point-to-plane normal equations carry no usable constraint."""


class EmptyUnion(HybridIcpError):
    """Both VSD visibility masks are empty."""


class EmptyLog(HybridIcpError):
    """An initialisation was requested from an empty estimate log."""


class DiameterTooLarge(HybridIcpError):
    """Object does not fit the single-image distance range."""


class BinUnfillable(HybridIcpError):
    """Rejection sampling ran out of attempts before filling a bin."""


class ConfigError(HybridIcpError):
    """Invalid experiment configuration."""
