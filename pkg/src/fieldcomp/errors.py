"""Exception hierarchy.

Each exception carries an ``exit_code`` used by the command line front end:
2 for configuration/validation problems, 3 for I/O, 4 for numerical failures.
"""


class FieldCompError(Exception):
    exit_code = 1


class ValidationError(FieldCompError, ValueError):
    exit_code = 2


class NumericalError(FieldCompError, ArithmeticError):
    exit_code = 4


# geometry
class FewerThanThreePoints(ValidationError):
    pass


class DegenerateGeometry(NumericalError):
    pass


class NearParallelPlanes(NumericalError):
    pass


# simulator
class InvalidConfig(ValidationError):
    pass


class InvalidBeam(ValidationError):
    pass


class OutOfBounds(ValidationError):
    pass


class LineParallelToPlane(NumericalError):
    pass


# pca
class TooFewSamples(ValidationError):
    pass


class NonFiniteData(ValidationError):
    pass


class InsufficientRuns(ValidationError):
    pass


class MissingBeam(ValidationError):
    pass


class DuplicateBeam(ValidationError):
    pass


# ann
class DimensionMismatch(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class EmptyTrainingSet(ValidationError):
    pass


class EncodingMismatch(ValidationError):
    pass


# metrics / cli
class ConfigError(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class IoError(FieldCompError, OSError):
    exit_code = 3
