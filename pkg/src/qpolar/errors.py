"""Exception hierarchy shared by all modules.

Each error carries an ``exit_code`` used by the command line driver:
1 for parse problems, 2 for validation problems, 3 for resource limits.
"""


class QpolarError(Exception):
    exit_code = 2


class ParseError(QpolarError):
    exit_code = 1


class ValidationError(QpolarError):
    exit_code = 2


class ResourceLimit(QpolarError):
    exit_code = 3


class NotAQuasigroup(ValidationError):
    def __init__(self, message, kind=None, index=None, value=None):
        super().__init__(message)
        self.kind = kind
        self.index = index
        self.value = value


class NotBalanced(ValidationError):
    pass


class PartitionMismatch(ValidationError):
    pass


class SizeMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class MissingInfoSymbol(ValidationError):
    pass


class InvalidBlockIndex(ValidationError):
    pass


class NotFullRank(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class AmbientMismatch(ValidationError):
    pass


class SingularSolve(ValidationError):
    pass


class AlphabetTooLarge(ResourceLimit):
    pass


class UserCountTooLarge(ResourceLimit):
    pass


class LatticeTooLarge(ResourceLimit):
    pass


class OutputExplosion(ResourceLimit):
    def __init__(self, step, size, message=None):
        super().__init__(message or f"output alphabet exploded at step {step}: {size} outputs")
        self.step = step
        self.size = size
