"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line layer.
"""


class AllelixError(Exception):
    exit_code = 1


class DomainError(AllelixError, ValueError):
    """Argument outside the mathematical domain of an operation"""


class NonConvergence(AllelixError):
    """Iterative procedure hit its iteration cap"""


class NumericFailure(AllelixError):
    """NaN/Inf intermediate or an unstable recurrence"""


class EmptyWindow(AllelixError):
    pass


class DegenerateWindow(AllelixError):
    pass


class SingularInformation(AllelixError):
    """Negative Hessian is not positive definite"""


class MissingEstimate(AllelixError):
    pass


class NestingViolation(AllelixError):
    pass


class ParseError(AllelixError):
    exit_code = 3

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class MissingField(ParseError):
    def __init__(self, path, line, field):
        self.field = field
        super().__init__(path, line, f"missing field {field!r}")


class AnnotationConflict(AllelixError):
    exit_code = 3


class EmptyDataset(AllelixError):
    pass


class VersionMismatch(AllelixError):
    exit_code = 4


class CorruptStore(AllelixError):
    exit_code = 4


class HashMismatch(AllelixError):
    exit_code = 5

    def __init__(self, path, expected, actual):
        self.path = str(path)
        self.expected = expected
        self.actual = actual
        super().__init__(f"input {self.path} changed: expected sha256 {expected}, got {actual}")


class ProjectLocked(AllelixError):
    exit_code = 6


class DegenerateWeights(AllelixError):
    """Every effect-size weight is zero"""
