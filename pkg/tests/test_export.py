import csv
import io
import os

import numpy as np
import pytest

from metasimplex.dynamics import IntegratorConfig, integrate_metasimplex, integrate_multipop
from metasimplex.equilibria import is_nash
from metasimplex.export import (format_number, loss_history_csv, matrix_text, read_matrix, trajectory_csv,
                                trajectory_header, write_atomic, write_matrix, write_report, write_trajectory)
from metasimplex.meta import embed_T
from metasimplex.payoff import GraphWeights, PayoffModel, embed_payoff

W0 = [[0.25, 0.75], [0.6, 0.4]]


@pytest.fixture(scope="session")
def trajectory():
    model = PayoffModel.sflow(GraphWeights.path_graph(2), c=2)
    return integrate_multipop(model, W0, IntegratorConfig(h=0.1, t_end=0.5))


def test_header(trajectory):
    assert trajectory_header(trajectory) == ['t', 'w_1_1', 'w_1_2', 'w_2_1', 'w_2_2', 'mean_payoff',
                                             'min_row_entropy', 'max_row_entry']


def test_meta_header():
    embedded = embed_payoff(PayoffModel.zero(2, 2))
    meta = integrate_metasimplex(embedded, embed_T(W0), IntegratorConfig(h=0.5, t_end=0.5))
    assert trajectory_header(meta)[1:5] == ['p_1', 'p_2', 'p_3', 'p_4']


def test_trajectory_csv(trajectory):
    rows = list(csv.reader(io.StringIO(trajectory_csv(trajectory))))
    assert len(rows) == 1 + len(trajectory)
    assert all(len(row) == 8 for row in rows)
    first = [float(value) for value in rows[1]]
    assert first[0] == 0.0
    assert first[1:5] == [0.25, 0.75, 0.6, 0.4]
    assert float(rows[-1][0]) == pytest.approx(0.5)


def test_values_survive_text(trajectory):
    rows = list(csv.reader(io.StringIO(trajectory_csv(trajectory))))[1:]
    states = np.array([[float(value) for value in row[1:5]] for row in rows])
    assert np.array_equal(states, trajectory.states.reshape(len(trajectory), -1))


def test_format_number():
    assert float(format_number(1 / 3)) == 1 / 3
    assert format_number(2) == '2'


def test_matrix(tmp_path):
    matrix = np.array([[1 / 3, -2.0], [0.0, 1e-20]])
    path = str(tmp_path / 'b.txt')
    write_matrix(path, matrix)
    assert np.array_equal(read_matrix(path), matrix)
    assert matrix_text([1.0, 2.0]) == '1 2\n'


def test_write_atomic_creates_folders(tmp_path):
    path = tmp_path / 'nested' / 'out' / 'file.txt'
    write_atomic(str(path), 'content\n')
    assert path.read_text(encoding='UTF-8') == 'content\n'
    assert os.listdir(path.parent) == ['file.txt']


def test_write_atomic_keeps_old_file_on_failure(tmp_path):
    path = tmp_path / 'file.txt'
    path.write_text('old', encoding='UTF-8')
    with pytest.raises(TypeError):
        write_atomic(str(path), None)
    assert path.read_text(encoding='UTF-8') == 'old'
    assert os.listdir(tmp_path) == ['file.txt']


def test_write_trajectory_and_report(tmp_path, trajectory):
    write_trajectory(str(tmp_path / 'trajectory.csv'), trajectory)
    assert (tmp_path / 'trajectory.csv').read_text(encoding='UTF-8') == trajectory_csv(trajectory)
    report = is_nash(PayoffModel.zero(1, 2), [[0.5, 0.5]])
    write_report(str(tmp_path / 'report.json'), report)
    text = (tmp_path / 'report.json').read_text(encoding='UTF-8')
    assert text.endswith('}\n')
    assert '"is_nash": true' in text


def test_loss_history_csv():
    assert loss_history_csv([1.5, 0.25]) == 'iteration,loss\n0,1.5\n1,0.25\n'
