"""Exception types shared across the solver."""


class DgwavesError(Exception):
    """Base class for all solver errors."""


class MeshFormatError(DgwavesError):
    """Malformed mesh/materials/source file."""


class GeometryError(DgwavesError):
    """Invalid element geometry (non-positive Jacobian, degenerate face)."""


class PairingError(DgwavesError):
    """Interface pairing failed (gap, overlap or non-planar face)."""


class MaterialError(DgwavesError):
    """Inconsistent material parameters or uncovered element."""


class ConfigError(DgwavesError):
    """Invalid run configuration."""


class NumericsError(DgwavesError):
    """Numerical failure during time integration (NaN/Inf detected)."""
