"""Exception hierarchy.

Every error raised on bad input data derives from :class:`DataError`, which
the command line maps to exit status 2.
"""


class Extrude3DError(Exception):
    """Base class for all package errors."""


class DataError(Extrude3DError):
    """Input data violates a documented format or contract."""


class EmptyCloud(DataError):
    pass


class PlyFormatError(DataError):
    pass


class CalibrationFormatError(DataError):
    pass


class DuplicateViewId(DataError):
    pass


class MapFormatError(DataError):
    pass


class BadMagic(DataError):
    pass


class BadDimensions(DataError):
    pass


class TruncatedData(DataError):
    pass


class MissingLabels(DataError):
    pass


class UnknownClassId(DataError):
    pass


class EmptyTargets(DataError):
    pass


class IoFailure(DataError):
    pass


class MalformedJson(DataError):
    pass


class NonIntegerPixel(DataError):
    pass


class DuplicatePixel(DataError):
    pass


class PixelOutOfBounds(DataError):
    pass


class GeometryMismatch(DataError):
    pass


class OutOfRangePointId(DataError):
    pass


class DuplicatePointId(DataError):
    pass


class MalformedPredictionLine(DataError):
    pass


class MissingTruthLabel(DataError):
    pass


class UnnormalizedDistribution(DataError):
    pass


class PointBudgetExceeded(DataError):
    pass


class SceneSpecError(DataError):
    pass


class StageFailure(Extrude3DError):
    """A benchmarked stage raised; the original exception is chained."""
