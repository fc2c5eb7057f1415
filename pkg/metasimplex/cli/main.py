# PYTHON_ARGCOMPLETE_OK
"""
Implements :ref:`cli_metasimplex`
"""

import argparse
import logging
import os
import sys
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import argcomplete
import numpy as np
from argcomplete.completers import ChoicesCompleter, FilesCompleter
from dataclasses_json import dataclass_json

import metasimplex
from metasimplex.cli.find import selection_argument
from metasimplex.config import ExperimentConfig, bundled_configs, load_config, resolve_config_path
from metasimplex.dynamics import Trajectory, integrate_metasimplex, integrate_multipop
from metasimplex.equilibria import ConvergenceReport, EssReport, convergence_report, ess_sample_check
from metasimplex.errors import ConfigError, NotStationaryWarning, NumericalFailure, SizeCapExceeded
from metasimplex.export import loss_history_csv, write_atomic, write_matrix, write_report, write_trajectory
from metasimplex.learning import LearnConfig, LearnResult, labeling_dataset, learn_egn
from metasimplex.meta import embed_T, is_on_wright_manifold
from metasimplex.payoff import PayoffModel, embed_payoff
from metasimplex.selection import Selection
from metasimplex.verify import SUITES, CheckResult, format_table, run_checks, select_checks

__all__ = ['main']

logger = logging.getLogger(__name__)

#: Largest deviation between the embedded multi-population run and the meta-simplex run.
EMBEDDING_TOL = 1e-6

EXIT_CHECKS_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_SIZE_CAP = 4


def main():  # pragma: no cover
    # completions
    argcomplete.autocomplete(parser)

    try:
        run()
    except Exit as e:
        exit(e.code)


def run():
    args = parser.parse_args(namespace=Args())
    _configure_logging(args.verbose)

    try:
        failed = args.func(args)
    except ConfigError as e:
        print(f'Invalid configuration: {e}', file=sys.stderr)
        raise Exit(EXIT_SIZE_CAP if isinstance(e.__cause__, SizeCapExceeded) else EXIT_CONFIG)
    except SizeCapExceeded as e:
        print(f'{e}', file=sys.stderr)
        raise Exit(EXIT_SIZE_CAP)
    except NumericalFailure as e:
        print(f'Numerical failure: {e}', file=sys.stderr)
        raise Exit(EXIT_NUMERICAL)

    if failed:
        raise Exit(EXIT_CHECKS_FAILED)


def _configure_logging(verbosity: int):
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, stream=sys.stderr, format='%(levelname)s %(name)s: %(message)s', force=True)


@dataclass_json
@dataclass
class RunReport:
    title: str
    seed: int
    n: int
    c: int
    kind: str
    scheme: str
    h: float
    t_end: float
    samples: int
    drift: float
    final_state: List[List[float]]
    convergence: Optional[ConvergenceReport] = None
    ess: Optional[EssReport] = None
    embedding_error: Optional[float] = None
    on_wright_manifold: Optional[bool] = None
    checks: List[CheckResult] = field(default_factory=list)


def run_experiment(args: 'Args') -> bool:
    """Runs the experiment of ``args.config``; returns whether any check failed"""
    config = load_config(args.config).with_overrides(
        seed=args.seed, output_dir=args.out, size_cap=args.cap, h=args.h, t_end=args.tend,
    )
    folder = config.output_dir or os.path.splitext(os.path.basename(resolve_config_path(args.config)))[0]

    model = config.build_model()
    W0 = config.initial_state(np.random.default_rng(config.seed))
    trajectory = integrate_multipop(model, W0, config.integrator)

    report = RunReport(
        title=config.title,
        seed=config.seed,
        n=model.n,
        c=model.c,
        kind=model.kind,
        scheme=config.integrator.scheme,
        h=config.integrator.h,
        t_end=config.integrator.t_end,
        samples=len(trajectory),
        drift=trajectory.drift,
        final_state=trajectory.final.tolist(),
    )
    _analyse(config, model, trajectory, report)

    _write(os.path.join(folder, 'trajectory.csv'), lambda path: write_trajectory(path, trajectory))
    if report.checks:
        table = format_table(report.checks)
        _write(os.path.join(folder, 'checks.txt'), lambda path: write_atomic(path, table))
        print(table, end='')
    _write(os.path.join(folder, 'report.json'), lambda path: write_report(path, report))
    return not all(result.passed for result in report.checks)


def _analyse(config: ExperimentConfig, model: PayoffModel, trajectory: Trajectory, report: RunReport):
    analysis = config.analysis
    if analysis.nash:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter('always', NotStationaryWarning)
            report.convergence = convergence_report(trajectory, model)
        for warning in caught:
            logger.warning('%s', warning.message)
        nash = report.convergence.nash
        report.checks.append(_check_result('nash', config.title, nash.violation, nash.tol, nash.is_nash))
    if analysis.ess:
        report.ess = ess_sample_check(model, trajectory.final, analysis.ess_radius, analysis.ess_samples, config.seed)
    if analysis.embedded:
        embedded = embed_payoff(model, config.size_cap)
        meta = integrate_metasimplex(embedded, embed_T(trajectory.states[0], config.size_cap), config.integrator)
        if analysis.embedding_check:
            embedded_states = np.stack([embed_T(W, config.size_cap) for W in trajectory.states])
            error = float(np.max(np.abs(embedded_states - meta.points)))
            report.embedding_error = error
            report.checks.append(_check_result('multipop-embedding', config.title, error, EMBEDDING_TOL,
                                               error <= EMBEDDING_TOL))
        if analysis.wright:
            report.on_wright_manifold = is_on_wright_manifold(meta.final, model.n, model.c, tol=EMBEDDING_TOL)


def _check_result(name: str, title: str, error: float, tolerance: float, passed: bool) -> CheckResult:
    return CheckResult(name=name, suite='run', statement=title, max_error=float(error), tolerance=tolerance,
                       passed=bool(passed), seconds=0.0)


def _write(path: str, writer):
    writer(path)
    print(f'Wrote {path}', file=sys.stderr)


def run_verify(args: 'Args') -> bool:
    """Runs the checks of ``args.suite``; returns whether any check failed"""
    checks = select_checks(args.suite, args.selection)
    if not checks:
        print(f'No checks of suite "{args.suite}" match the selection', file=sys.stderr)
        raise Exit(EXIT_CONFIG)
    results = run_checks(checks)
    table = format_table(results)
    print(table, end='')
    if args.out is not None:
        _write(os.path.join(args.out, 'checks.txt'), lambda path: write_atomic(path, table))
        json = CheckResult.schema().dumps(results, many=True, indent=2) + '\n'
        _write(os.path.join(args.out, 'report.json'), lambda path: write_atomic(path, json))
    return not all(result.passed for result in results)


def run_learn(args: 'Args') -> bool:
    """Learns a game matrix on the desk-scale labelling problem"""
    defaults = LearnConfig()
    cfg = LearnConfig(
        iterations=args.iterations,
        learning_rate=args.learning_rate,
        h=defaults.h if args.h is None else args.h,
        horizon=defaults.horizon if args.tend is None else args.tend,
    )
    dataset = labeling_dataset(args.rows, args.cols, args.labels, seed=0 if args.seed is None else args.seed)
    result: LearnResult = learn_egn(dataset.target, dataset.omega, np.eye(dataset.c), cfg, v0=dataset.v0)

    print(f'accuracy {result.accuracy:.4f}, loss {result.initial_loss:.6g} -> {result.best_loss:.6g} '
          f'(iteration {result.best_iteration})')
    folder = 'learn' if args.out is None else args.out
    _write(os.path.join(folder, 'loss_history.csv'),
           lambda path: write_atomic(path, loss_history_csv(result.loss_history)))
    _write(os.path.join(folder, 'b.txt'), lambda path: write_matrix(path, result.b_matrix))
    _write(os.path.join(folder, 'report.json'), lambda path: write_report(path, result))
    return False


def _config_completer(prefix, action, parser, parsed_args):
    return [name for name in bundled_configs() if name.startswith(prefix)]


class Exit(Exception):
    def __init__(self, code: int = 1):
        super().__init__(code)
        self.code = code


class Args(argparse.Namespace):
    func: object
    verbose: int
    config: str
    suite: str
    selection: Optional[Selection]
    seed: Optional[int]
    out: Optional[str]
    cap: Optional[int]
    h: Optional[float]
    tend: Optional[float]
    rows: int
    cols: int
    labels: int
    iterations: int
    learning_rate: float


def _seed(value: str) -> int:
    seed = int(value)
    if not 0 <= seed < 2 ** 64:
        raise argparse.ArgumentTypeError(f'Seed must be an unsigned 64 bit integer, got {value}')
    return seed


def _positive(type_):
    def convert(value: str):
        result = type_(value)
        if not result > 0:
            raise argparse.ArgumentTypeError(f'Expected a positive number, got {value}')
        return result
    return convert


# parser is on module level for sphinx-autoprogram
parser = argparse.ArgumentParser(description='Run replicator dynamics experiments and verification suites')

parser.add_argument('--version', action='version', version=f"%(prog)s ({metasimplex.__version__})")
parser.add_argument(
    '-v', '--verbose', action='count', default=0, help='Log progress to stderr, repeat for debug output'
)

subparsers = parser.add_subparsers(metavar="action", required=True)

# run
parser_run = subparsers.add_parser('run', help='integrate an experiment config and analyse its limit')
parser_run.set_defaults(func=run_experiment)
parser_run.add_argument(
    'config', help='path to an experiment config, or the name of a bundled config'
).completer = _config_completer  # type: ignore
parser_run.add_argument(
    '--out', metavar='DIR', help='output folder, overrides output_dir of the config'
).completer = FilesCompleter(allowednames="*.7CA0B927-3B02-48EA-97A9-CB557E061992")  # type: ignore
parser_run.add_argument('--seed', type=_seed, help='overrides the seed of the config')
parser_run.add_argument('--cap', type=_positive(int), metavar='N', help='overrides the meta-simplex size cap')
parser_run.add_argument('--h', type=_positive(float), metavar='STEP', help='overrides the integrator step')
parser_run.add_argument('--tend', type=float, metavar='T', help='overrides the integration horizon')

# verify
parser_verify = subparsers.add_parser('verify', help='run a verification suite and print its check table')
parser_verify.set_defaults(func=run_verify)
parser_verify.add_argument(
    'suite', choices=('all', *SUITES), help='suite to run'
).completer = ChoicesCompleter(('all', *SUITES))  # type: ignore
parser_verify.add_argument(
    '-e', '--expression', dest='selection', type=selection_argument,
    help='selection expression, e.g. "not tag:slow" or "name:q-* and N <= 9"'
)
parser_verify.add_argument('--out', metavar='DIR', help='also write checks.txt and report.json to DIR')

# learn
parser_learn = subparsers.add_parser('learn', help='learn the game matrix of a grid labelling problem')
parser_learn.set_defaults(func=run_learn)
parser_learn.add_argument('--rows', type=_positive(int), default=8, help='grid rows (default: %(default)s)')
parser_learn.add_argument('--cols', type=_positive(int), default=8, help='grid columns (default: %(default)s)')
parser_learn.add_argument(
    '-c', '--labels', type=_positive(int), default=3, help='number of labels (default: %(default)s)'
)
parser_learn.add_argument(
    '-n', '--iterations', type=int, default=LearnConfig.iterations, help='gradient steps (default: %(default)s)'
)
parser_learn.add_argument(
    '--learning-rate', type=_positive(float), default=LearnConfig.learning_rate,
    help='step size (default: %(default)s)'
)
parser_learn.add_argument('--seed', type=_seed, help='seed of the initial assignment (default: 0)')
parser_learn.add_argument('--out', metavar='DIR', help='output folder (default: learn)')
parser_learn.add_argument('--h', type=_positive(float), metavar='STEP', help='integrator step')
parser_learn.add_argument('--tend', type=_positive(float), metavar='T', help='time horizon')


if __name__ == "__main__":
    main()
