"""Exception hierarchy shared across the package."""


class QRSError(ValueError):
    """Base class for every error raised by :mod:`qrs`."""


class LabelError(QRSError):
    pass


class CapacityError(QRSError):
    pass


class DisjointnessError(QRSError):
    pass


class SubsetError(QRSError):
    pass


class PartitionError(QRSError):
    pass


class NumericalError(QRSError):
    pass


class UnitarityError(QRSError):
    pass


class NormalizationError(QRSError):
    pass


class IsolationError(QRSError):
    """Raised when a rule that needs an isolated reference system gets a non-isolated one."""


class DimensionError(QRSError):
    pass


class IndexOutOfRangeError(QRSError, IndexError):
    pass


class DegenerateBranchError(QRSError):
    """The unnormalized branch vector vanishes, so the conditional state is undefined."""


class PhaseUndefinedError(QRSError):
    pass
