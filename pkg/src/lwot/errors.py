"""Exception types shared across the package.

Every error raised on bad user input derives from LwotError so the CLI can
map it to a structured error document and exit code 1.
"""


class LwotError(Exception):
    """Base class for all lwot domain errors."""

    code = "Error"


class EmptyMeasure(LwotError):
    code = "EmptyMeasure"


class NotProbability(LwotError):
    code = "NotProbability"


class DimMismatch(LwotError):
    code = "DimMismatch"


class EmptyInput(LwotError):
    code = "EmptyInput"


class ProblemTooLarge(LwotError):
    code = "ProblemTooLarge"


class UnsupportedDim(LwotError):
    code = "UnsupportedDim"


class GhostTooLarge(LwotError):
    code = "GhostTooLarge"


class W3ViolationDetected(LwotError):
    code = "W3ViolationDetected"


class MalformedLimb(LwotError):
    code = "MalformedLimb"


class BoundsUnavailable(LwotError):
    code = "BoundsUnavailable"


class InvalidExponent(LwotError):
    code = "InvalidExponent"


class InvalidQuantile(LwotError):
    code = "InvalidQuantile"
