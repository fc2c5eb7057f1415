import os
import sys
from contextlib import ExitStack
from io import StringIO
from typing import List, Tuple
from unittest import mock

import pytest

from metasimplex.cli.find import parser

TESTCASE_DIR = os.path.join(os.path.dirname(__file__), '..', '..', 'testcases', 'configs')


def run_find(arguments: List[str]) -> Tuple[List[str], List[str]]:
    with ExitStack() as stack:
        stack.enter_context(mock.patch('sys.stdout', new_callable=StringIO))
        stack.enter_context(mock.patch('sys.stderr', new_callable=StringIO))
        args = parser.parse_args(arguments)
        args.func(args)
        return sys.stdout.getvalue().splitlines(), sys.stderr.getvalue().splitlines()  # type: ignore


def find(arguments: List[str]) -> List[str]:
    return run_find(arguments)[0]


class TestConfigs:
    def test_bundled(self):
        assert find(['configs']) == ['egn-2x2.json', 'multigame-wright.json', 'sflow-path.json', 'zero-payoff.json']

    @pytest.mark.parametrize('expression, expected', [
        ('embedding', ['egn-2x2.json', 'multigame-wright.json']),
        ('N <= 8', ['egn-2x2.json', 'multigame-wright.json']),
        ('scheme:geometric-*', ['zero-payoff.json']),
        ('kind:egn or h >= 0.05', ['egn-2x2.json', 'sflow-path.json', 'zero-payoff.json']),
        ('name:"S-flow*"', ['sflow-path.json']),
        ('n > 3 and c = 3', ['sflow-path.json']),
    ])
    def test_selected(self, expression, expected):
        assert find(['-e', expression, 'configs']) == expected

    def test_long(self):
        lines = find(['-e', 'kind:egn', 'configs', '-l'])
        assert [line.split() for line in lines] == [
            ['config', 'kind', 'scheme', 'n', 'c', 'N'],
            ['egn-2x2.json', 'egn', 'rk4-tangent', '2', '2', '4'],
        ]

    def test_skips_invalid_files(self):
        listed, messages = run_find(['configs', TESTCASE_DIR])
        assert listed == ['explicit-initial.json', 'linear-2x2.json', 'potential-path.json']
        assert len(messages) == 7
        assert all(message.startswith('Skipping ') and '.invalid.json: ' in message for message in messages)

    def test_no_messages(self):
        listed, messages = run_find(['-s', 'configs', TESTCASE_DIR])
        assert len(listed) == 3
        assert messages == []

    def test_missing_folder(self, tmp_path):
        with ExitStack() as stack:
            stack.enter_context(mock.patch('sys.stderr', new_callable=StringIO))
            with pytest.raises(SystemExit):
                parser.parse_args(['configs', str(tmp_path / 'missing')])


class TestLabels:
    def test_tags(self):
        assert find(['labels', 'tag']) == ['convergence', 'coordination', 'egn', 'embedding', 'labelling',
                                           'multigame', 'sflow', 'trivial', 'wright']

    def test_tags_count(self):
        lines = find(['labels', 'tag', '-c'])
        assert lines[0].split() == ['2', 'embedding']
        assert len(lines) == 9

    def test_kinds(self):
        assert find(['labels', 'kind']) == ['egn', 'multigame', 'sflow', 'zero']

    def test_schemes_count(self):
        assert [line.split() for line in find(['labels', 'scheme', '-c'])] == [['3', 'rk4-tangent'],
                                                                               ['1', 'geometric-euler']]

    def test_selected_configs(self):
        assert find(['-e', 'N > 8', 'labels', 'kind']) == ['sflow', 'zero']

    def test_checks(self):
        assert find(['-e', 'name:desk-scale-learning', 'labels', 'tag', '--checks']) == ['slow']
        assert find(['labels', 'suite', '--checks', '-c'])[0].split() == ['8', 'geometry']
        assert find(['labels', 'scheme', '--checks']) == []


class TestChecks:
    def test_all(self):
        assert len(find(['checks'])) == 23

    @pytest.mark.parametrize('expression, expected', [
        ('name:q-rank', ['geometry/q-rank']),
        ('tag:slow', ['learning/desk-scale-learning']),
        ('kind:multigame', ['embedding/multigame-structure', 'embedding/multigame-decomposition']),
        ('suite:equilibria and N <= 4', ['equilibria/embedded-nash']),
    ])
    def test_selected(self, expression, expected):
        assert find(['-e', expression, 'checks']) == expected

    def test_long(self):
        lines = find(['-e', 'name:adjoint-*', 'checks', '-l'])
        assert [line.split() for line in lines] == [
            ['check', 'tolerance', 'largest', 'N'],
            ['learning/adjoint-scalar', '1e-06', '-'],
            ['learning/adjoint-egn', '0.0001', '16'],
        ]


@pytest.mark.parametrize('expression', ['kind:', 'N <=', 'color:red', 'slow and'])
def test_invalid_expression(expression):
    with ExitStack() as stack:
        stack.enter_context(mock.patch('sys.stderr', new_callable=StringIO))
        with pytest.raises(SystemExit):
            parser.parse_args(['-e', expression, 'configs'])
