"""
Output files of experiment runs. Every file is written to a temporary file in the target folder first and then moved
into place, so an interrupted run never leaves a partial file behind.
"""

import io
import os
import tempfile
from typing import Iterable, List, Sequence

import numpy as np
from numpy.typing import ArrayLike

from metasimplex.dynamics import Trajectory

__all__ = [
    'write_atomic', 'format_number', 'trajectory_header', 'trajectory_csv', 'write_trajectory',
    'matrix_text', 'write_matrix', 'read_matrix', 'write_report', 'loss_history_csv',
]


def write_atomic(path: str, content: str):
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=folder, prefix=f'.{os.path.basename(path)}.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='UTF-8', newline='') as file:
            file.write(content)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def format_number(value: float) -> str:
    """
    Full precision, 17 significant digits.

    >>> format_number(0.1)
    '0.10000000000000001'
    """
    return f'{float(value):.17g}'


def trajectory_header(trajectory: Trajectory) -> List[str]:
    if trajectory.presentation == 'meta':
        columns = [f'p_{k + 1}' for k in range(trajectory.states.shape[2])]
    else:
        columns = [f'w_{i + 1}_{j + 1}' for i in range(trajectory.n) for j in range(trajectory.c)]
    return ['t', *columns, 'mean_payoff', 'min_row_entropy', 'max_row_entry']


def trajectory_csv(trajectory: Trajectory) -> str:
    """
    The trajectory as CSV: time, state entries row by row, and the per-sample diagnostics.
    """
    output = io.StringIO()
    output.write(','.join(trajectory_header(trajectory)) + '\n')
    columns = zip(trajectory.times, trajectory.states.reshape(len(trajectory), -1), trajectory.mean_payoff,
                  trajectory.min_row_entropy, trajectory.max_row_entry)
    for t, state, mean, entropy, extremality in columns:
        values = [t, *state, mean, entropy, extremality]
        output.write(','.join(format_number(value) for value in values) + '\n')
    return output.getvalue()


def write_trajectory(path: str, trajectory: Trajectory):
    write_atomic(path, trajectory_csv(trajectory))


def matrix_text(matrix: ArrayLike) -> str:
    """
    >>> print(matrix_text([[1, 0.5], [0, 2]]), end='')
    1 0.5
    0 2
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    return ''.join(' '.join(format_number(value) for value in row) + '\n' for row in matrix)


def write_matrix(path: str, matrix: ArrayLike):
    write_atomic(path, matrix_text(matrix))


def read_matrix(path: str) -> np.ndarray:
    with open(path, 'r', encoding='UTF-8') as file:
        return np.array([[float(value) for value in line.split()] for line in file if line.strip()])


def write_report(path: str, report) -> None:
    """Writes a ``dataclass_json`` report as indented JSON."""
    write_atomic(path, report.to_json(indent=2) + '\n')


def loss_history_csv(losses: Sequence[float]) -> str:
    lines: Iterable[str] = (f'{iteration},{format_number(loss)}' for iteration, loss in enumerate(losses))
    return 'iteration,loss\n' + ''.join(line + '\n' for line in lines)
