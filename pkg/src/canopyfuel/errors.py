"""Exception hierarchy.

Every error raised by the library derives from :class:`CanopyError`. The three
intermediate classes map onto the command-line exit codes: bad input (2),
degenerate data (3) and filesystem trouble (4).
"""


class CanopyError(Exception):
    exit_code = 1


class InputError(CanopyError):
    """Input could not be parsed or violates a documented precondition."""

    exit_code = 2


class DegenerateData(CanopyError):
    """Input parsed fine but carries too little structure to continue."""

    exit_code = 3


class IoFailure(CanopyError):
    exit_code = 4


# geometry
class DegenerateGeometry(DegenerateData):
    pass


class LengthMismatch(InputError):
    pass


# ingestion
class MalformedHeader(InputError):
    pass


class TruncatedBody(InputError):
    pass


class MalformedRow(InputError):
    pass


class DuplicateFrame(InputError):
    pass


class SchemaViolation(InputError):
    pass


class EmptyFrames(InputError):
    pass


class TypeMismatch(InputError):
    pass


class BadMagic(InputError):
    pass


# rasters
class EmptyCloud(DegenerateData):
    pass


class DegenerateRange(DegenerateData):
    pass


# segmentation
class EmptyMask(DegenerateData):
    pass


class NoMarkers(DegenerateData):
    pass


class MarkerOutsideCanopy(InputError):
    pass


class NoLabels(DegenerateData):
    pass


# inventory
class OutOfRange(InputError):
    pass


class EmptyInventory(DegenerateData):
    pass


# synthetic data
class PackingInfeasible(InputError):
    pass
