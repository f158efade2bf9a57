"""Exception types shared across the package, with their CLI exit codes."""


class SingextError(Exception):
    """Base class; `exit_code` is what the CLI returns when the error escapes."""

    exit_code = 1


class ConfigError(SingextError):
    exit_code = 2


class InvalidPointError(SingextError):
    """A point violates a manifold membership precondition."""


class RetractionError(SingextError):
    """Nearest-point retraction undefined (ambient zero vector)."""


class InterpolationDegeneracyError(SingextError):
    """Interpolated ambient value cannot be retracted; names the offending cell."""

    def __init__(self, cell, message=None):
        self.cell = cell
        super().__init__(message or f"interpolation degenerate in cell {cell}")


class AmbiguousLiftError(SingextError):
    """Consecutive samples antipodal: the angular lift is not well defined."""


class OutOfRangeError(SingextError):
    """Cube scale index outside the configured scale range."""


class OutOfBandError(SingextError):
    """Height outside the covered band; carries the nearest valid scale."""

    def __init__(self, height, nearest_k, message=None):
        self.height = height
        self.nearest_k = nearest_k
        super().__init__(
            message
            or f"height {height} outside the covered band (nearest scale k={nearest_k})"
        )


class SelectionFailureError(SingextError):
    """No (tau, h) candidate satisfied the skeleton distance constraint."""

    exit_code = 3


class TubeViolationError(SingextError):
    """An extension sample left the retraction tube; names the cube."""

    exit_code = 4

    def __init__(self, cube_id, distance, message=None):
        self.cube_id = cube_id
        self.distance = distance
        super().__init__(
            message
            or f"extension left the tube on cube {cube_id} (dist {distance:.3g})"
        )


class ResolutionError(SingextError):
    """Boundary sampling too coarse for the requested extension."""


class SingularPointError(SingextError):
    """Homogeneous extension evaluated exactly at its singular center."""


class PoleError(SingextError):
    """Conformal map evaluated at (or too close to) its pole."""


class VerificationFailureError(SingextError):
    exit_code = 5
