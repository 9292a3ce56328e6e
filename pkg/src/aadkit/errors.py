"""Exception hierarchy shared by all aadkit modules."""


class AadError(Exception):
    """Base class for all aadkit errors."""


class DimensionMismatch(AadError):
    pass


class LengthMismatch(DimensionMismatch):
    pass


class SingularSystem(AadError):
    pass


class NonConvergence(AadError):
    pass


class NotSpd(AadError):
    pass


class InvalidBand(AadError):
    pass


class BadChannelIndex(AadError):
    pass


class IrrationalRatio(AadError):
    pass


class BadLag(AadError):
    pass


class DegenerateClass(AadError):
    pass


class SingularScatter(AadError):
    pass


class BadProtocolConfig(AadError):
    pass


class EmptyGrid(AadError):
    pass


class ManifestError(AadError):
    pass


class ShapeMismatch(AadError):
    pass


class UnknownTask(AadError):
    pass


class BadConfig(AadError):
    pass


class IoError(AadError):
    pass
