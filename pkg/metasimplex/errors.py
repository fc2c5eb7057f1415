"""
Exceptions and warnings raised by :mod:`metasimplex`.

Every exception derives from :class:`MetasimplexError` and from the builtin exception that describes the failure
best, so callers can catch either.
"""

__all__ = [
    'MetasimplexError', 'DimensionMismatch', 'InvalidState', 'NotOnWrightManifold', 'SizeCapExceeded',
    'NumericalFailure', 'CheckpointBudgetExceeded', 'KindMismatch', 'ConfigError', 'SelectionError', 'NotStationaryWarning',
]


class MetasimplexError(Exception):
    pass


class DimensionMismatch(MetasimplexError, ValueError):
    pass


class InvalidState(MetasimplexError, ValueError):
    pass


class NotOnWrightManifold(InvalidState):
    pass


class SizeCapExceeded(MetasimplexError, MemoryError):
    def __init__(self, n: int, c: int, cap: int):
        super().__init__(f'Meta-simplex dimension {c}**{n} = {c ** n} exceeds the size cap {cap}')
        self.n = n
        self.c = c
        self.cap = cap


class NumericalFailure(MetasimplexError, ArithmeticError):
    pass


class CheckpointBudgetExceeded(NumericalFailure):
    pass


class KindMismatch(MetasimplexError, TypeError):
    pass


class ConfigError(MetasimplexError, ValueError):
    """Invalid experiment configuration. `field` is the path of the offending entry, e.g. ``payoff.omega``."""

    def __init__(self, message: str, field: str = ''):
        super().__init__(f'{field}: {message}' if field else message)
        self.field = field


class SelectionError(MetasimplexError, ValueError):
    pass


class NotStationaryWarning(UserWarning):
    pass
