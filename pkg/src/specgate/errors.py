"""Exception hierarchy shared by every module of the toolkit."""


class SpecgateError(Exception):
    """Base class for all toolkit errors."""


class EmptyInput(SpecgateError, ValueError):
    pass


class InvalidParams(SpecgateError, ValueError):
    pass


class InvalidInput(SpecgateError, ValueError):
    pass


class ShapeMismatch(SpecgateError, ValueError):
    pass


class RateMismatch(SpecgateError, ValueError):
    pass


class InputTooShort(SpecgateError, ValueError):
    pass


class InvalidReference(SpecgateError, ValueError):
    """The reference (clean) signal cannot anchor the metric."""


class MissedDetection(SpecgateError):
    """An event present in the reference was not detected in the estimate."""


class ParseError(SpecgateError, ValueError):
    pass


class Unsupported(SpecgateError, ValueError):
    pass


class IoError(SpecgateError, OSError):
    pass


class NondeterministicOutput(SpecgateError):
    """A benchmarked runner produced different outputs for identical inputs."""
