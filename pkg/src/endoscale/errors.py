"""Exception hierarchy.

``DataError`` subclasses signal problems with the input data (degenerate
geometry, bad masks, mismatched maps). ``ConfigError`` subclasses signal bad
parameters. The CLI maps them to exit codes 2 and 1.
"""


class EndoscaleError(Exception):
    pass


class ConfigError(EndoscaleError, ValueError):
    pass


class DataError(EndoscaleError, ValueError):
    pass


# geometry
class NonPositiveDepth(DataError):
    pass


class DegenerateView(DataError):
    pass


class LineInPlane(DataError):
    pass


class PointAtInfinity(DataError):
    pass


class InvalidPixel(DataError):
    pass


# instrument pose
class MaskTooSmall(DataError):
    pass


class BoundariesNotFound(DataError):
    pass


class NoInteriorTip(DataError):
    pass


class LineMissesMask(DataError):
    pass


class DegenerateLines(DataError):
    pass


class NoValidSignCombination(DataError):
    pass


class TipPlaneDegenerate(DataError):
    pass


# depth maps / fusion
class InvalidSize(ConfigError):
    pass


class DimensionMismatch(DataError):
    pass


class UnitMismatch(DataError):
    pass


class NonPositiveEpsilon(ConfigError):
    pass


class DegenerateMedian(DataError):
    pass


# scale recovery
class InsufficientSamples(DataError):
    pass


class DegenerateDesign(DataError):
    pass


class NumericalFailure(DataError):
    pass


class ZeroEta(DataError):
    pass


class FrameRejected(DataError):
    """Raised by ``recover_frame``; ``reason`` is the failing stage's error name."""

    def __init__(self, reason, detail=""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason}: {detail}" if detail else reason)


# evaluation
class NoValidPixels(DataError):
    pass


class ZeroMedian(DataError):
    pass


class EmptyList(DataError):
    pass


# synthetic / io
class EmptyFrustum(DataError):
    pass


class MismatchedFrameSets(DataError):
    pass


class IoError(EndoscaleError, OSError):
    def __init__(self, path, detail):
        self.path = str(path)
        super().__init__(f"{path}: {detail}")
