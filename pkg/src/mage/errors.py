"""Exception hierarchy shared by all modules."""


class MageError(Exception):
    """Base class for every error raised by the package."""


class DimensionUnsupported(MageError):
    pass


class ResolutionInvalid(MageError):
    pass


class GridTooLarge(MageError):
    pass


class MetricNotPositive(MageError):
    pass


class NotOmegaPsh(MageError):
    """Raised when ``omega + dd^c u`` has an eigenvalue below the tolerance.

    ``worst_index`` is the grid multi-index of the worst point and
    ``eigenvalue`` the offending relative eigenvalue.
    """

    def __init__(self, worst_index, eigenvalue):
        self.worst_index = tuple(int(i) for i in worst_index)
        self.eigenvalue = float(eigenvalue)
        super().__init__(
            f"omega + dd^c u not positive at {self.worst_index}: "
            f"eigenvalue {self.eigenvalue:.3e}"
        )


class DeltaBelowResolution(MageError):
    pass


class InsufficientSamples(MageError):
    pass


class NonpositiveSample(MageError):
    pass


class DensityInvalid(MageError):
    pass


class NotConverged(MageError):
    """Newton failed; ``result`` holds the best iterate and its diagnostics."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ScaleOutOfRange(MageError):
    pass


class QuadratureNotConverged(MageError):
    pass


class HypothesisViolated(MageError):
    def __init__(self, message, worst_t=None):
        super().__init__(message)
        self.worst_t = worst_t


class ScheduleTooShort(MageError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ExponentNotRealized(MageError):
    pass


class ConfigInvalid(MageError):
    def __init__(self, field, message=None):
        self.field = field
        super().__init__(message or f"invalid or missing config field {field!r}")


class OutputDirUnwritable(MageError):
    pass


class SweepFailed(MageError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
