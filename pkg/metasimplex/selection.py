"""
Selection expressions for verification checks and experiment configs.

An expression combines terms with ``not``, ``and`` and ``or`` (in order of precedence) and parentheses. Terms are

- ``field:pattern``, a shell glob matched case-insensitively against the labels of one field. Fields are ``suite``,
  ``tag``, ``kind``, ``scheme`` and ``name``, e.g. ``name:q-*`` or ``kind:egn``.
- a bare pattern, matched against the labels of every field, e.g. ``embedding``.
- a comparison ``quantity op number`` with ``<``, ``<=``, ``>``, ``>=``, ``=`` or ``!=``. Quantities are the number
  of nodes ``n``, the number of labels ``c``, the meta-simplex dimension ``N = c**n``, the step size ``h``, the
  horizon ``t_end`` and the tolerance ``tol``. A comparison holds when every value of the item satisfies it, so
  ``N <= 27`` selects checks that never build a meta-simplex with more than 27 entries. Items without a value for
  the quantity never match.

Patterns with blanks are quoted, e.g. ``name:"Zero payoff"``.

>>> parse_selection('kind:egn and N <= 9')
AllOf(operands=(LabelMatch(field='kind', pattern='egn'), Comparison(quantity='N', operator='<=', value=9.0)))
"""

import operator
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fnmatch import fnmatchcase
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, TypeVar

import pyparsing
from pyparsing import CaselessKeyword, ParserElement, QuotedString, Regex, Suppress, infixNotation, oneOf, opAssoc
from typing_extensions import Protocol

from metasimplex.errors import SelectionError

__all__ = [
    'LABEL_FIELDS', 'QUANTITIES', 'Selectable', 'Selection', 'LabelMatch', 'Comparison', 'Not', 'AllOf', 'AnyOf',
    'parse_selection', 'select',
]

LABEL_FIELDS = ('suite', 'tag', 'kind', 'scheme', 'name')
QUANTITIES = ('n', 'c', 'N', 'h', 't_end', 'tol')

_COMPARISONS: Dict[str, Callable[[float, float], bool]] = {
    '<': operator.lt,
    '<=': operator.le,
    '>': operator.gt,
    '>=': operator.ge,
    '=': operator.eq,
    '==': operator.eq,
    '!=': operator.ne,
}


class Selectable(Protocol):
    """Something a selection can be evaluated against."""

    def selection_labels(self) -> Mapping[str, Sequence[str]]:
        """Labels per entry of :data:`LABEL_FIELDS`."""

    def selection_values(self) -> Mapping[str, Sequence[float]]:
        """Values per entry of :data:`QUANTITIES`."""


class Selection(ABC):
    """A predicate on :class:`Selectable` items. Combine selections with ``&``, ``|`` and ``~``."""

    @abstractmethod
    def matches(self, item: Selectable) -> bool:
        raise NotImplementedError

    def __and__(self, other: 'Selection') -> 'Selection':
        return AllOf((self, other))

    def __or__(self, other: 'Selection') -> 'Selection':
        return AnyOf((self, other))

    def __invert__(self) -> 'Selection':
        return Not(self)


@dataclass(frozen=True)
class LabelMatch(Selection):
    """Glob `pattern` against the labels of `field`, of every field if it is ``None``."""
    field: Optional[str]
    pattern: str

    def __post_init__(self):
        if self.field is not None and self.field not in LABEL_FIELDS:
            raise SelectionError(f'Unknown field "{self.field}", expected one of {", ".join(LABEL_FIELDS)}')

    def matches(self, item: Selectable) -> bool:
        labels = item.selection_labels()
        fields = LABEL_FIELDS if self.field is None else (self.field,)
        pattern = self.pattern.casefold()
        return any(fnmatchcase(label.casefold(), pattern) for name in fields for label in labels.get(name, ()))


@dataclass(frozen=True)
class Comparison(Selection):
    quantity: str
    operator: str
    value: float

    def __post_init__(self):
        if self.quantity not in QUANTITIES:
            raise SelectionError(f'Unknown quantity "{self.quantity}", expected one of {", ".join(QUANTITIES)}')
        if self.operator not in _COMPARISONS:
            raise SelectionError(f'Unknown comparison "{self.operator}"')

    def matches(self, item: Selectable) -> bool:
        values = item.selection_values().get(self.quantity, ())
        compare = _COMPARISONS[self.operator]
        return len(values) > 0 and all(compare(value, self.value) for value in values)


@dataclass(frozen=True)
class Not(Selection):
    operand: Selection

    def matches(self, item: Selectable) -> bool:
        return not self.operand.matches(item)


@dataclass(frozen=True)
class AllOf(Selection):
    operands: Tuple[Selection, ...]

    def matches(self, item: Selectable) -> bool:
        return all(operand.matches(item) for operand in self.operands)


@dataclass(frozen=True)
class AnyOf(Selection):
    operands: Tuple[Selection, ...]

    def matches(self, item: Selectable) -> bool:
        return any(operand.matches(item) for operand in self.operands)


# keywords end only at characters that cannot continue a pattern
_PATTERN_CHARS = pyparsing.alphanums + '_-*?[].'


@lru_cache(maxsize=None)
def _grammar() -> ParserElement:
    keywords = [CaselessKeyword(word, identChars=_PATTERN_CHARS) for word in ('not', 'and', 'or')]
    not_, and_, or_ = keywords

    number = Regex(r'[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?')
    number.setParseAction(lambda toks: float(toks[0]))
    comparison = oneOf(QUANTITIES) + oneOf(list(_COMPARISONS)) + number
    comparison.setParseAction(lambda toks: Comparison(toks[0], toks[1], toks[2]))

    pattern = QuotedString('"') | QuotedString("'") | Regex(r'[^\s()"\':<>=!]+')
    label_match = oneOf(LABEL_FIELDS) + Suppress(':') + pattern
    label_match.setParseAction(lambda toks: LabelMatch(toks[0], toks[1]))
    bare_pattern = ~pyparsing.MatchFirst(keywords) + pattern
    bare_pattern.setParseAction(lambda toks: LabelMatch(None, toks[0]))

    term = comparison | label_match | bare_pattern
    return infixNotation(term, [
        (not_, 1, opAssoc.RIGHT, lambda toks: Not(toks[0][1])),
        (and_, 2, opAssoc.LEFT, lambda toks: AllOf(tuple(toks[0][::2]))),
        (or_, 2, opAssoc.LEFT, lambda toks: AnyOf(tuple(toks[0][::2]))),
    ])


def parse_selection(text: str) -> Selection:
    """
    Parses a selection expression.

    :raises SelectionError: If `text` is not a valid expression.
    """
    try:
        return _grammar().parseString(text, parseAll=True)[0]
    except pyparsing.ParseBaseException as e:
        raise SelectionError(f'"{text}" is not a valid selection: {e}') from e


T = TypeVar('T', bound=Selectable)


def select(items: Iterable[T], selection: Optional[Selection] = None) -> List[T]:
    """The items matching `selection` in their original order, all of them without a selection."""
    return [item for item in items if selection is None or selection.matches(item)]
