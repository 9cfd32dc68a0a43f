"""Exception hierarchy shared by every module of the package."""


class DoublingError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DoublingError, ValueError):
    """Invalid input or configuration (CLI exit code 2)."""


class PreconditionError(DoublingError):
    """A mathematical precondition failed on valid input (CLI exit code 3)."""


class InvalidDistance(ConfigError):
    pass


class SymmetryViolation(ConfigError):
    pass


class DegeneratePair(ConfigError):
    pass


class InvalidRatio(ConfigError):
    pass


class MetricMismatch(ConfigError):
    pass


class InvalidResolution(ConfigError):
    pass


class InvalidExponents(ConfigError):
    pass


class ScaleTooSmall(ConfigError):
    pass


class OracleTooLarge(DoublingError):
    """The exact packing oracle was asked for more points than its cap."""


class PartitionBroken(DoublingError):
    """A net point has no children; the hierarchy is inconsistent."""


class HypothesisViolation(PreconditionError):
    """The comparability hypothesis of a refinement step does not hold.

    ``level`` is the net level being refined and ``pair`` the offending
    (heavier, lighter) pair of point indices.
    """

    def __init__(self, message, level=None, pair=None):
        super().__init__(message)
        self.level = level
        self.pair = pair


class UnsupportedMeasure(PreconditionError):
    """A measure gives zero mass to some ball it must charge."""
