"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class LadderError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""

    exit_code = 2


class ValidationError(LadderError, ValueError):
    pass


class TooFewPoints(ValidationError):
    pass


class NonFinite(ValidationError):
    pass


class MixedResolutionSets(ValidationError):
    pass


class BadResolutionSet(ValidationError):
    pass


# video I/O and features
class BadMagic(ValidationError):
    pass


class UnsupportedFormat(ValidationError):
    pass


class TruncatedFrame(ValidationError):
    pass


class SizeMismatch(ValidationError):
    pass


class FrameTooSmall(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class TooFewFrames(ValidationError):
    pass


# learners
class DegenerateLabels(ValidationError):
    pass


class SingularKernel(LadderError, ArithmeticError):
    pass


class BadBoundaryIndex(ValidationError, IndexError):
    pass


class ModelFormatError(ValidationError):
    pass


# encoder backends
class BadParams(ValidationError):
    pass


class UnsupportedResolution(ValidationError):
    pass


class RateOutOfRange(ValidationError):
    pass


class EncoderFailure(LadderError, RuntimeError):
    exit_code = 3

    def __init__(self, message: str, output: str = ""):
        super().__init__(message)
        self.output = output


class CacheCorruption(LadderError, RuntimeError):
    exit_code = 3


# evaluation
class NoOverlap(ValidationError):
    pass


class BadTarget(ValidationError):
    pass


class DatasetTooSmall(ValidationError):
    pass
