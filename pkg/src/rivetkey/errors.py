"""Exception types raised across the package."""


class RivetKeyError(Exception):
    """Base class for all package errors."""


class DataError(RivetKeyError):
    """Bad or inconsistent input data (maps to CLI exit code 2)."""


class GeometryOverflow(RivetKeyError):
    pass


class SchemaError(DataError, ValueError):
    pass


class InsufficientGroups(DataError, ValueError):
    pass


class KeypointOutsideRoi(DataError, ValueError):
    pass


class KeypointOutOfBounds(DataError, ValueError):
    pass


class KeypointEjected(RivetKeyError):
    """An augmentation pushed a keypoint out of frame; the caller should resample."""


class ConfigError(RivetKeyError, ValueError):
    pass


class ShapeError(RivetKeyError, ValueError):
    pass


class EmptyDataset(DataError):
    pass


class CheckpointMismatch(DataError):
    pass


class LengthMismatch(DataError, ValueError):
    pass


class NonpositiveScale(DataError, ValueError):
    pass


class UnknownId(DataError, KeyError):
    pass


class MissingHeadRadius(DataError):
    pass


class InvertedPair(DataError, ValueError):
    pass
