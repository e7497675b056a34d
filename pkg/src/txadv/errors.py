"""Exception hierarchy shared by all txadv modules."""


class TxAdvError(Exception):
    """Base class for every error raised by this package."""


# dataset
class DatasetError(TxAdvError):
    pass


class UnknownColumn(DatasetError):
    pass


class MissingColumn(DatasetError):
    pass


class RowParseError(DatasetError):
    def __init__(self, row: int, column: str, reason: str):
        self.row = row
        self.column = column
        self.reason = reason
        super().__init__(f"row {row}, column {column!r}: {reason}")


class EmptyDataset(DatasetError):
    pass


class BadClassMix(DatasetError):
    pass


class TooFewRows(DatasetError):
    pass


# preprocess
class WrongSchema(TxAdvError):
    pass


class SchemaMismatch(TxAdvError):
    pass


class SingleClassDataset(TxAdvError):
    pass


# models
class WidthMismatch(TxAdvError):
    pass


class DegenerateK(TxAdvError):
    pass


class BadLabel(TxAdvError):
    pass


class NotFitted(TxAdvError):
    pass


# attacks
class AttackError(TxAdvError):
    pass


class InvalidPlan(AttackError):
    pass


class NegativePct(AttackError):
    pass


class NRowsTooLarge(AttackError):
    pass


class UnknownGroup(AttackError):
    pass


class ClassAbsent(AttackError):
    pass


class EmptyMask(AttackError):
    pass


# eval / defense
class EmptyConfusion(TxAdvError):
    pass


class LengthMismatch(TxAdvError):
    pass


class CodecMismatch(TxAdvError):
    pass


# cli
class ConfigError(TxAdvError):
    pass
