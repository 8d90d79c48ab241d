"""Exception hierarchy.

Two families: ``ModelError`` for inputs that fall outside the domain of the
equations (CLI exit code 3), and ``InputError`` for malformed or unresolvable
input data (CLI exit code 2).
"""


class EVLError(Exception):
    """Base class for every error raised by this package."""


class ModelError(EVLError, ValueError):
    pass


class DegenerateDistance(ModelError):
    pass


class DegenerateConvergence(ModelError):
    pass


class DegenerateConvergenceResponse(ModelError):
    pass


class NonpositiveLighting(ModelError):
    pass


class InvalidThreshold(ModelError):
    pass


class InvalidDomain(ModelError):
    pass


class InputError(EVLError, ValueError):
    pass


class OutOfRange(InputError):
    pass


class OverlappingRanges(InputError):
    pass


class InsufficientData(InputError):
    pass


class MissingColumn(InputError):
    pass


class BadNumeric(InputError):
    def __init__(self, line, column, value):
        super().__init__(f"line {line}, column {column!r}: not a number: {value!r}")
        self.line = line
        self.column = column
        self.value = value


class InvalidNearWorkType(InputError):
    def __init__(self, line, value):
        super().__init__(f"line {line}: unknown near-work type {value!r}")
        self.line = line
        self.value = value


class ConflictingLightingSource(InputError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ConfigError(InputError):
    pass


class EmptyImage(InputError):
    pass


class NonpositiveEstimate(ModelError):
    pass


class PnmError(InputError):
    pass


class BadMagic(PnmError):
    pass


class TruncatedData(PnmError):
    pass


class BadMaxval(PnmError):
    pass
