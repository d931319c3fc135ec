"""Exception hierarchy.

Two families matter to callers: :class:`DataError` (bad or degenerate input,
CLI exit code 2) and :class:`SolverError` (observability and numerical
failures, CLI exit code 3).
"""


class CalibrationError(Exception):
    """Base class for every error raised by this package."""


class DataError(CalibrationError, ValueError):
    pass


class SolverError(CalibrationError, RuntimeError):
    pass


# geometry
class NonPositiveDepth(DataError):
    pass


class DegenerateLine(DataError):
    pass


class ParallelPlanes(DataError):
    pass


class DegenerateConfiguration(DataError):
    pass


# lidar features
class EmptyResult(DataError):
    pass


class InsufficientPoints(DataError):
    pass


class NoConsensus(DataError):
    pass


class NoRingStructure(DataError):
    pass


class InsufficientEdgePoints(DataError):
    pass


class LineDeficit(DataError):
    """Fewer than four boundary lines reached ``min_line_points``.

    ``found`` is the number of usable lines and ``partial`` holds them (an
    :class:`~lidarcam_calib.lidar_features.EdgeLines` with fewer than four
    entries) so callers can still use them for the edge cost.
    """

    def __init__(self, found, partial=None):
        super().__init__(
            f"only {found} of 4 boundary lines detected; edges parallel to "
            "the scan rings are hard to detect, rotate the target"
        )
        self.found = found
        self.partial = partial


class LabelingError(DataError):
    pass


# camera features
class ParallelAdjacentLines(DataError):
    pass


class DegenerateCorners(DataError):
    pass


class PnPDiverged(DataError):
    pass


# solver
class ObservabilityError(SolverError):
    pass


class NumericalFailure(SolverError):
    pass


class JacobianMismatch(SolverError):
    pass


# synthetic
class NoHits(DataError):
    pass


class BehindCamera(DataError):
    pass
