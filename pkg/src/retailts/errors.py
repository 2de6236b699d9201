"""Exception types raised across the package."""

from __future__ import annotations


class RetailTSError(Exception):
    """Base class for all errors raised by retailts."""


class InputError(RetailTSError, ValueError):
    """Invalid caller input."""


# data_core
class MissingColumn(InputError):
    def __init__(self, name: str):
        super().__init__(f"missing column: {name}")
        self.name = name


class MalformedRow(InputError):
    def __init__(self, line: int, detail: str = ""):
        msg = f"malformed row at line {line}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.line = line


class DuplicateKey(InputError):
    def __init__(self, store: int, date: str):
        super().__init__(f"duplicate (store, date) key: ({store}, {date})")
        self.store = store
        self.date = date


class UnknownStore(InputError):
    def __init__(self, store: int):
        super().__init__(f"unknown store: {store}")
        self.store = store


class EmptySeries(InputError):
    pass


class SpanTooShort(InputError):
    pass


# features
class LagExceedsLength(InputError):
    pass


class EmptySelection(InputError):
    def __init__(self, message: str, stores: tuple[int, ...] = ()):
        super().__init__(message)
        self.stores = stores


# models
class SeriesTooShort(InputError):
    pass


class OptimizerDiverged(RetailTSError, ArithmeticError):
    pass


class DidNotConverge(RetailTSError, ArithmeticError):
    pass


class ColumnMismatch(InputError):
    pass


class LengthMismatch(InputError):
    pass


class TooFewRows(InputError):
    pass


class EmptyInput(InputError):
    pass


# copulas / vine
class DegenerateData(InputError):
    pass


class BoundaryInput(InputError):
    pass


class NonPositiveData(InputError):
    pass


# bayes
class SingularPrecision(RetailTSError, ArithmeticError):
    pass


class ChainTooShort(InputError):
    pass


class EmptyChain(InputError):
    pass


class KindMismatch(InputError):
    pass


class MetropolisStuck(UserWarning):
    """Emitted when the degrees-of-freedom sampler rarely accepts."""


# cli / report
class UnknownCommand(InputError):
    pass


class BadFlag(InputError):
    pass
