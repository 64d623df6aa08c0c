"""Exception hierarchy shared across the package."""


class GeoContactError(Exception):
    """Base class for all package errors."""


class DimensionError(GeoContactError, ValueError):
    """Operand shapes are incompatible."""


class ConfigError(GeoContactError, ValueError):
    """An invalid configuration value or combination."""


class PDBParseError(GeoContactError, ValueError):
    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class EmptyStructureError(GeoContactError, ValueError):
    """No chain in the input has a usable residue."""


class DegenerateGeometryError(GeoContactError, ValueError):
    """Points are coincident or collinear where a frame is required."""


class GraphFormatError(GeoContactError, ValueError):
    """A serialized graph document does not match the schema."""


class CheckpointError(GeoContactError, ValueError):
    """A checkpoint container is malformed or incompatible."""


class BackwardError(GeoContactError, RuntimeError):
    """Misuse of reverse-mode differentiation."""


class IncompatibleModelError(CheckpointError):
    """Inputs do not match the shapes a checkpoint was trained for."""


class NumericalError(GeoContactError, FloatingPointError):
    """A non-finite loss or parameter appeared during training."""
