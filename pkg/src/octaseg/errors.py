"""Exception types raised across the package."""


class OctaSegError(Exception):
    """Base class for all package errors."""


class ConfigError(OctaSegError, ValueError):
    pass


class RoiTooLarge(ConfigError):
    pass


class BadChannels(ConfigError):
    pass


class ShapeMismatch(OctaSegError, ValueError):
    pass


class MissingMask(OctaSegError, FileNotFoundError):
    pass


class UnknownSplit(OctaSegError, KeyError):
    pass


class ChannelTooSmall(OctaSegError, ValueError):
    pass


class OddChannels(OctaSegError, ValueError):
    pass


class NonSquareInput(OctaSegError, ValueError):
    pass


class EmptySet(OctaSegError, ValueError):
    pass


class NonFiniteLoss(OctaSegError, RuntimeError):
    """Raised when the training loss becomes NaN or infinite.

    ``batch_ids`` names the samples of the offending batch.
    """

    def __init__(self, message, batch_ids=()):
        super().__init__(message)
        self.batch_ids = tuple(batch_ids)
