"""Exception hierarchy. CLI maps InputError to exit 2 and InvariantError to exit 3."""


class DefiFraudError(Exception):
    pass


class InputError(DefiFraudError, ValueError):
    """Bad or unusable input data."""


class InvariantError(DefiFraudError, RuntimeError):
    """An internal validation or invariant check failed."""


class MalformedRecord(InputError):
    pass


class UnknownEnumValue(InputError):
    pass


class NegativeValue(InputError):
    pass


class MalformedRow(InputError):
    pass


class EmptyRegistry(InputError):
    pass


class InvalidConfig(InputError):
    pass


class EmptyCorpus(InputError):
    pass


class EmptyHistory(InputError):
    pass


class SchemaMismatch(InputError):
    pass


class NoMaliciousRows(InputError):
    pass


class AllColumnsDropped(InputError):
    pass


class TooFewRows(InputError):
    pass


class MinorityTooSmall(InputError):
    pass


class SingleClassTrainingSet(InputError):
    pass


class NonFiniteLoss(InvariantError):
    pass


class DimensionMismatch(InputError):
    pass


class Unsupported(DefiFraudError, TypeError):
    pass


class ClassTooSmall(InputError):
    pass


class EmptyConfusion(InputError):
    pass
