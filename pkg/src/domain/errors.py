"""
Exception hierarchy for the entropic transport library.

Every error carries a message from :mod:`src.conf.messages`; the HTTP layer
maps :class:`EntropicOTError` to a 422 response and the CLI to exit code 1.
"""


class EntropicOTError(Exception):
    """
    Base class for all library errors
    """


class EmptySampleError(EntropicOTError):
    pass


class SampleParseError(EntropicOTError):
    """
    Raised when a sample file cannot be parsed.

    Attributes:
        index (int | None): 1-based record index where parsing failed
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class UnboundedCostError(EntropicOTError):
    pass


class ShapeMismatchError(EntropicOTError):
    pass


class UnknownCostError(EntropicOTError):
    pass


class UnknownGeneratorError(EntropicOTError):
    pass


class NumericFailureError(EntropicOTError):
    pass


class NonOptimalPotentialsError(EntropicOTError):
    pass


class NotCenteredError(EntropicOTError):
    pass


class SingularSystemError(EntropicOTError):
    pass


class CoordinateDataError(EntropicOTError):
    pass


class InvalidThresholdsError(EntropicOTError):
    pass


class InvalidEtaSpecError(EntropicOTError):
    pass


class InvalidLevelError(EntropicOTError):
    pass


class InvalidMeasureError(EntropicOTError):
    pass


class ConfigSchemaError(EntropicOTError):
    """
    Raised when a simulation config does not match the schema.

    Attributes:
        keys (list[str]): offending keys, dotted paths
    """

    def __init__(self, message: str, keys: list[str] | None = None):
        super().__init__(message)
        self.keys = keys or []


class UnknownKernelMapError(EntropicOTError):
    pass


class MissingOptionError(EntropicOTError):
    """
    Raised when a target needs an option that was not given.
    """


class UnknownTargetError(EntropicOTError):
    pass
