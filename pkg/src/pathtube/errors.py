"""Exception types shared across the library."""


class PathTubeError(Exception):
    """Base class for all library errors."""


class DegenerateMetricError(PathTubeError):
    """Metric matrix is singular or not positive-definite at a queried point."""


class TrajectoryError(PathTubeError):
    """Boundary-value solve failed to converge.

    Carries the final residual so callers can report how far off the shot was.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StepSizeError(PathTubeError):
    """Discretization too coarse (energy drift or PDE stability budget exceeded)."""


class FrameError(PathTubeError):
    """Frame transport drifted away from g-orthonormality beyond tolerance."""


class OutOfChartError(PathTubeError):
    """Exponential/logarithm map left the chart's injectivity guard."""


class ShapeError(PathTubeError):
    """Mismatched grid lengths or array shapes."""


class ContourError(PathTubeError):
    """Probe contour does not close (endpoint mismatch)."""


class NearPoleError(PathTubeError):
    """Resolvent evaluated inside the guard band around a pole."""


class BoundaryError(PathTubeError):
    """Barrier evaluated at or beyond the tube radius."""


class PartitionError(PathTubeError):
    """Partition nodes do not lie on the sampling grid."""


class NoDataError(PathTubeError):
    """Estimator invoked on an empty ensemble."""


class BoundViolationError(PathTubeError):
    """A declared sup-norm bound was violated by an actual sample."""


class WeightError(PathTubeError):
    """Time-weight vector is not a probability distribution."""


class SizeError(PathTubeError):
    """Brute-force instance exceeds the enumeration budget."""


class ConfigError(PathTubeError):
    """Invalid experiment configuration (bad key, bad value, bad file)."""


class PathCsvError(PathTubeError):
    """Malformed path CSV. Carries the offending row number."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row
