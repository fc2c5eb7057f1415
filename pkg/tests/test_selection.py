from dataclasses import dataclass
from typing import Tuple

import pytest

from metasimplex.errors import SelectionError
from metasimplex.selection import AllOf, AnyOf, Comparison, LabelMatch, Not, parse_selection, select
from metasimplex.verify import CHECKS


@dataclass(frozen=True)
class Item:
    name: str
    kind: str = 'egn'
    tags: Tuple[str, ...] = ()
    dims: Tuple[Tuple[int, int], ...] = ((2, 2),)

    def selection_labels(self):
        return {'name': [self.name], 'kind': [self.kind], 'tag': self.tags}

    def selection_values(self):
        return {'n': [n for n, _ in self.dims], 'c': [c for _, c in self.dims], 'N': [c ** n for n, c in self.dims]}


ITEMS = [
    Item('pair', tags=('coordination',)),
    Item('triple', kind='multigame', tags=('wright', 'embedding'), dims=((3, 2),)),
    Item('mixed', kind='sflow', dims=((2, 2), (4, 3))),
    Item('scalar', kind='custom', dims=()),
]


def selected(text: str):
    return [item.name for item in select(ITEMS, parse_selection(text))]


@pytest.mark.parametrize('text, expected', [
    ('kind:egn', ['pair']),
    ('kind:EGN', ['pair']),
    ('name:*i*', ['pair', 'triple', 'mixed']),
    ('embedding', ['triple']),
    ('tag:w?ight', ['triple']),
    ('tag:[cw]*', ['pair', 'triple']),
    ('name:"scalar"', ['scalar']),
    ('not not kind:custom', ['scalar']),
])
def test_labels(text, expected):
    assert selected(text) == expected


@pytest.mark.parametrize('text, expected', [
    ('N <= 4', ['pair']),
    ('N<=8', ['pair', 'triple']),
    ('n = 2', ['pair']),
    ('c != 3', ['pair', 'triple']),
    ('c > 1.5e0', ['pair', 'triple', 'mixed']),
    ('not N <= 8', ['mixed', 'scalar']),
])
def test_comparisons_hold_for_every_value(text, expected):
    assert selected(text) == expected


@pytest.mark.parametrize('text, expected', [
    ('kind:egn or kind:sflow and N > 10', ['pair']),
    ('(kind:egn or kind:sflow) and n >= 2', ['pair', 'mixed']),
    ('embedding or coordination or kind:custom', ['pair', 'triple', 'scalar']),
])
def test_precedence(text, expected):
    assert selected(text) == expected


def test_parsed_structure():
    assert parse_selection('kind:egn and N <= 9 and not tag:slow') == AllOf((
        LabelMatch('kind', 'egn'),
        Comparison('N', '<=', 9.0),
        Not(LabelMatch('tag', 'slow')),
    ))
    assert parse_selection('q-rank') == LabelMatch(None, 'q-rank')


def test_operators():
    selection = LabelMatch('kind', 'egn') | ~Comparison('N', '<=', 8)
    assert selection == AnyOf((LabelMatch('kind', 'egn'), Not(Comparison('N', '<=', 8))))
    assert [item.name for item in select(ITEMS, selection)] == ['pair', 'mixed', 'scalar']
    assert [item.name for item in select(ITEMS, LabelMatch('kind', 'egn') & Comparison('c', '=', 3))] == []


def test_select_without_selection():
    assert select(ITEMS) == ITEMS


@pytest.mark.parametrize('text', ['', 'kind:', 'color:red', 'N <', 'N <= many', 'tag:a and', '(kind:egn', 'not'])
def test_invalid(text):
    with pytest.raises(SelectionError):
        parse_selection(text)


@pytest.mark.parametrize('make', [lambda: LabelMatch('colour', 'red'), lambda: Comparison('rank', '<', 1)])
def test_unknown_field(make):
    with pytest.raises(SelectionError):
        make()


class TestChecks:
    def test_small_meta_simplices(self):
        checks = select(CHECKS, parse_selection('suite:geometry and N <= 27'))
        assert [c.name for c in checks] == ['support', 'lifting-commutation', 'q-adjoint', 'projection-commutation',
                                            'differential-closed-form', 'isometric-embedding', 'q-rank']

    def test_slow(self):
        assert [c.name for c in select(CHECKS, parse_selection('tag:slow'))] == ['desk-scale-learning']
        assert [c.name for c in select(CHECKS, parse_selection('suite:learning and not tag:slow'))] == \
            ['adjoint-scalar', 'adjoint-egn']

    def test_checks_without_dims_never_compare(self):
        assert select(CHECKS, parse_selection('name:adjoint-scalar and N >= 0')) == []
        assert len(select(CHECKS, parse_selection('name:adjoint-scalar and tol <= 1e-6'))) == 1

    def test_bare_pattern_matches_suite(self):
        assert {c.suite for c in select(CHECKS, parse_selection('dynamics'))} == {'dynamics'}
