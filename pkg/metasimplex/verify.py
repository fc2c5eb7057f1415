"""
Verification suites: seeded numerical checks of the identities connecting multi-population dynamics, the
meta-simplex, equilibria and adjoint gradients.

Every check is registered with :func:`check` in declaration order and reports its largest observed error against a
tolerance. Suites are ``geometry``, ``embedding``, ``dynamics``, ``equilibria`` and ``learning``; ``all`` runs
every check.
"""

import functools
import itertools
import logging
import time
import warnings
import zlib
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from dataclasses_json import dataclass_json

from metasimplex.dynamics import (IntegratorConfig, decompose_multigame, integrate_metasimplex, integrate_multipop,
                                  recombine)
from metasimplex.equilibria import (check_embedded_nash, convergence_report, ess_sample_check, is_nash,
                                    is_nash_meta)
from metasimplex.errors import NotStationaryWarning
from metasimplex.learning import (LearnConfig, adjoint_gradient, egn_tangent_problem, finite_diff_gradient,
                                  labeling_dataset, learn_egn, LearnProblem)
from metasimplex.meta import (differential_T, embed_T, embedded_support_matches, lift_Q, marginalize_M,
                              max_entropy_check, q_kernel, q_matrix, q_rank, rank1_projection,
                              vertex_image)
from metasimplex.payoff import (GameMatrix, GraphWeights, PayoffModel, embed_payoff, embedded_potential_gradient,
                                embedded_potential_value, eval_payoff, multigame_matrix, payoff_matrix,
                                potential_value)
from metasimplex.selection import Selection, select
from metasimplex.simplex import (fisher_rao_inner, lift, lift_W, project_tangent, random_assignment,
                                 random_near_vertex, random_tangent, replicator_apply)

__all__ = [
    'SUITES', 'Outcome', 'Check', 'CheckResult', 'CHECKS',
    'check', 'select_checks', 'run_checks', 'format_table',
]

logger = logging.getLogger(__name__)

SUITES = ('geometry', 'embedding', 'dynamics', 'equilibria', 'learning')


@dataclass(frozen=True)
class Outcome:
    error: float
    passed: bool
    detail: str = ''


def _within(error: float, tolerance: float, detail: str = '') -> Outcome:
    return Outcome(error=float(error), passed=bool(error <= tolerance), detail=detail)


@dataclass(frozen=True)
class Check:
    """A named verification row. `dims` lists the ``(n, c)`` assignment spaces it builds."""
    name: str
    suite: str
    statement: str
    tolerance: float
    func: Callable[['Check'], Outcome] = field(compare=False, repr=False)
    tags: Tuple[str, ...] = ()
    kinds: Tuple[str, ...] = ()
    dims: Tuple[Tuple[int, int], ...] = ()

    def selection_labels(self) -> Mapping[str, Sequence[str]]:
        return {'suite': [self.suite], 'tag': self.tags, 'kind': self.kinds, 'name': [self.name]}

    def selection_values(self) -> Mapping[str, Sequence[float]]:
        return {
            'n': [n for n, _ in self.dims],
            'c': [labels for _, labels in self.dims],
            'N': [labels ** n for n, labels in self.dims],
            'tol': [self.tolerance],
        }

    def rng(self) -> np.random.Generator:
        """A generator seeded by the check name."""
        return np.random.default_rng(zlib.crc32(self.name.encode()))

    def run(self) -> Outcome:
        return self.func(self)


@dataclass_json
@dataclass(frozen=True)
class CheckResult:
    name: str
    suite: str
    statement: str
    max_error: float
    tolerance: float
    passed: bool
    seconds: float
    detail: str = ''


#: All checks in declaration order.
CHECKS: List[Check] = []


def check(suite: str, name: str, tolerance: float, statement: str, *, tags: Sequence[str] = (),
          kinds: Sequence[str] = (), dims: Iterable[Tuple[int, int]] = ()):
    """Registers the decorated function as a check."""
    def decorator(func: Callable[[Check], Outcome]):
        CHECKS.append(Check(name=name, suite=suite, statement=statement, tolerance=tolerance, func=func,
                            tags=tuple(tags), kinds=tuple(kinds), dims=tuple(dims)))
        return func
    return decorator


def select_checks(suite: str = 'all', selection: Optional[Selection] = None) -> List[Check]:
    if suite != 'all' and suite not in SUITES:
        raise ValueError(f'Unknown suite "{suite}", expected one of all, {", ".join(SUITES)}')
    return select((c for c in CHECKS if suite == 'all' or c.suite == suite), selection)


def run_checks(checks: Iterable[Check]) -> List[CheckResult]:
    """Runs `checks` one after the other. Exceptions raised by a check fail its row."""
    results = []
    for c in checks:
        logger.info('Running %s/%s', c.suite, c.name)
        start = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter('ignore', NotStationaryWarning)
                outcome = c.run()
        except Exception as e:
            logger.exception('Check %s raised', c.name)
            outcome = Outcome(error=float('inf'), passed=False, detail=f'{type(e).__name__}: {e}')
        seconds = time.perf_counter() - start
        results.append(CheckResult(name=c.name, suite=c.suite, statement=c.statement, max_error=outcome.error,
                                   tolerance=c.tolerance, passed=outcome.passed, seconds=seconds,
                                   detail=outcome.detail))
    return results


def format_table(results: Sequence[CheckResult]) -> str:
    """
    Fixed-width table with one row per result.

    >>> print(format_table([CheckResult('q-rank', 'geometry', '', 0.0, 1e-10, True, 0.01)]), end='')
    check   | max error | tolerance | status | seconds
    q-rank  | 0         | 1e-10     | pass   | 0.01
    """
    header = ('check', 'max error', 'tolerance', 'status', 'seconds')
    rows = [(r.name, f'{r.max_error:.3g}', f'{r.tolerance:.3g}', 'pass' if r.passed else 'FAIL', f'{r.seconds:.2f}')
            for r in results]
    widths = [max(len(row[i]) for row in [header, *rows]) for i in range(len(header))]
    widths[0] += 2
    lines = []
    for row in [header, *rows]:
        cells = [cell.ljust(width) for cell, width in zip(row, widths)]
        lines.append(' | '.join(cells).rstrip() + '\n')
    return ''.join(lines)


SMALL_DIMS = ((2, 2), (2, 3), (3, 2), (3, 3))


# geometry

@check('geometry', 'round-trip', 1e-13, 'marginals of the product embedding give back the state',
       dims=itertools.product((2, 3, 5), (2, 3, 4)))
def _round_trip(c: Check) -> Outcome:
    rng = c.rng()
    error = 0.0
    for n, labels in c.dims:
        for _ in range(200):
            W = random_assignment(rng, n, labels)
            error = max(error, np.max(np.abs(marginalize_M(embed_T(W), n, labels) - W)))
    return _within(error, c.tolerance)


@check('geometry', 'support', 0, 'support of the embedding is the product of the supports', dims=SMALL_DIMS)
def _support(c: Check) -> Outcome:
    rng = c.rng()
    mismatches = 0
    for n, labels in c.dims:
        for _ in range(100):
            W = random_assignment(rng, n, labels)
            W[rng.random(W.shape) < 0.3] = 0.0
            empty = W.sum(axis=1) == 0
            W[empty, rng.integers(labels, size=int(empty.sum()))] = 1.0
            W /= W.sum(axis=1, keepdims=True)
            mismatches += not embedded_support_matches(W)
        for vertex in itertools.product(range(labels), repeat=n):
            mismatches += not np.array_equal(embed_T(np.eye(labels)[list(vertex)]), vertex_image(vertex, labels))
    return _within(mismatches, c.tolerance)


@check('geometry', 'lifting-commutation', 1e-12, 'embedding commutes with the lifting map', dims=SMALL_DIMS)
def _lifting_commutation(c: Check) -> Outcome:
    rng = c.rng()
    error = 0.0
    for n, labels in c.dims:
        for _ in range(200):
            S = random_assignment(rng, n, labels)
            V = rng.uniform(-5, 5, size=(n, labels))
            error = max(error, np.max(np.abs(embed_T(lift_W(S, V)) - lift(embed_T(S), lift_Q(V)))))
    return _within(error, c.tolerance)


@check('geometry', 'q-adjoint', 1e-12, 'summation along multi-indices is adjoint to marginalization',
       dims=SMALL_DIMS)
def _q_adjoint(c: Check) -> Outcome:
    rng = c.rng()
    error = 0.0
    for n, labels in c.dims:
        for _ in range(200):
            p = rng.dirichlet(np.ones(labels ** n))
            V = rng.uniform(-1, 1, size=(n, labels))
            error = max(error, abs(lift_Q(V) @ p - np.sum(V * marginalize_M(p, n, labels))))
        error = max(error, np.max(np.abs(q_matrix(n, labels) @ np.ones(n * labels) - n)))
    return _within(error, c.tolerance)


@check('geometry', 'projection-commutation', 1e-12,
       'tangent projection and replicator operator commute with the embedding', dims=SMALL_DIMS)
def _projection_commutation(c: Check) -> Outcome:
    rng = c.rng()
    error = 0.0
    for n, labels in c.dims:
        for _ in range(200):
            W = random_assignment(rng, n, labels)
            X = rng.uniform(-1, 1, size=(n, labels))
            error = max(error, np.max(np.abs(project_tangent(lift_Q(X)) - lift_Q(project_tangent(X)))))
            error = max(error, np.max(np.abs(replicator_apply(embed_T(W), lift_Q(X))
                                             - differential_T(W, replicator_apply(W, X)))))
    return _within(error, c.tolerance)


@check('geometry', 'differential-closed-form', 1e-6, 'closed form of the differential matches central differences',
       dims=SMALL_DIMS)
def _differential_closed_form(c: Check) -> Outcome:
    rng = c.rng()
    step = 1e-5
    error = 0.0
    for n, labels in c.dims:
        for _ in range(50):
            W = random_assignment(rng, n, labels, concentration=5.0)
            V = random_tangent(rng, (n, labels))
            numeric = (embed_T(W + step * V) - embed_T(W - step * V)) / (2 * step)
            error = max(error, np.max(np.abs(differential_T(W, V) - numeric)))
    return _within(error, c.tolerance)


@check('geometry', 'isometric-embedding', 1e-10, 'the embedding pulls the Fisher-Rao metric back to itself',
       dims=SMALL_DIMS)
def _isometric_embedding(c: Check) -> Outcome:
    rng = c.rng()
    error = 0.0
    for n, labels in c.dims:
        for _ in range(100):
            W = random_assignment(rng, n, labels, concentration=5.0)
            U, V = random_tangent(rng, (n, labels)), random_tangent(rng, (n, labels))
            expected = fisher_rao_inner(W, U, V)
            actual = fisher_rao_inner(embed_T(W), differential_T(W, U), differential_T(W, V))
            error = max(error, abs(actual - expected) / max(1.0, abs(expected)))
    return _within(error, c.tolerance)


@check('geometry', 'q-rank', 1e-10, 'summation matrix has rank nc - n + 1 with row-constant kernel',
       dims=SMALL_DIMS)
def _q_rank(c: Check) -> Outcome:
    error = 0.0
    ranks = []
    for n, labels in c.dims:
        rank = q_rank(n, labels)
        ranks.append(str(rank))
        error = max(error, abs(rank - (n * labels - n + 1)))
        kernel = q_kernel(n, labels)
        error = max(error, abs(len(kernel) - (n - 1)))
        for d in kernel:
            error = max(error, np.max(np.ptp(d, axis=1)), abs(d[:, 0].sum()))
    return _within(error, c.tolerance, detail=f'ranks {", ".join(ranks)}')


# embedding

EMBEDDING_RUN_DIMS = ((3, 2), (2, 3))


@lru_cache(maxsize=None)
def _egn_embedding_runs():
    rng = np.random.default_rng(zlib.crc32(b'multipop-embedding'))
    cfg = IntegratorConfig(scheme='rk4-tangent', h=1e-4, t_end=5.0, stride=500)
    runs = []
    for n, labels in EMBEDDING_RUN_DIMS:
        model = PayoffModel.egn(GraphWeights.path_graph(n), GameMatrix(rng.uniform(-1, 1, size=(labels, labels))))
        W0 = random_assignment(rng, n, labels)
        runs.append((integrate_multipop(model, W0, cfg), integrate_metasimplex(embed_payoff(model), embed_T(W0), cfg)))
    return tuple(runs)


@check('embedding', 'multipop-embedding', 1e-6, 'multi-population dynamics embeds into meta-simplex dynamics',
       kinds=('egn',), dims=EMBEDDING_RUN_DIMS)
def _multipop_embedding(c: Check) -> Outcome:
    error = 0.0
    for multipop, meta in _egn_embedding_runs():
        embedded = np.stack([embed_T(W) for W in multipop.states])
        error = max(error, np.max(np.abs(embedded - meta.points)))
    return _within(error, c.tolerance)


@check('embedding', 'tangent-embedding', 1e-8, 'tangent dynamics embeds by summation along multi-indices',
       kinds=('egn',), dims=EMBEDDING_RUN_DIMS)
def _tangent_embedding(c: Check) -> Outcome:
    error = 0.0
    for multipop, meta in _egn_embedding_runs():
        lifted = np.stack([lift_Q(V) for V in multipop.tangents])
        error = max(error, np.max(np.abs(lifted - meta.tangents[:, 0, :])))
    return _within(error, c.tolerance)


@check('embedding', 'max-entropy', 1e-10, 'product embedding has maximal entropy among equal marginals',
       dims=((3, 2),))
def _max_entropy(c: Check) -> Outcome:
    rng = c.rng()
    n, labels = c.dims[0]
    identity_error = 0.0
    smallest_gap = np.inf
    for _ in range(50):
        report = max_entropy_check(random_assignment(rng, n, labels), trials=1000, rng=rng)
        identity_error = max(identity_error, report.identity_error)
        smallest_gap = min(smallest_gap, report.smallest_gap)
    return Outcome(error=identity_error, passed=bool(identity_error <= c.tolerance and smallest_gap > 0),
                   detail=f'smallest entropy gap {smallest_gap:.3g}')


@check('embedding', 'multigame-structure', 1e-12, 'joint game matrix is the summed block-diagonal game',
       kinds=('multigame',), dims=((3, 2), (2, 3)))
def _multigame_structure(c: Check) -> Outcome:
    rng = c.rng()
    error = 0.0
    for n, labels in c.dims:
        for _ in range(20):
            games = [rng.uniform(-1, 1, size=(labels, labels)) for _ in range(n)]
            joint = multigame_matrix(games)
            Q = q_matrix(n, labels)
            model = PayoffModel.multigame([GameMatrix(game) for game in games])
            error = max(error, np.max(np.abs(joint - Q @ payoff_matrix(model) @ Q.T)),
                        np.max(np.abs(joint - embed_payoff(model).matrix)))
    return _within(error, c.tolerance)


@check('embedding', 'multigame-decomposition', 1e-6,
       'multi-game dynamics on the Wright manifold decomposes into single games', kinds=('multigame',),
       dims=((3, 2),))
def _multigame_decomposition(c: Check) -> Outcome:
    rng = c.rng()
    n, labels = c.dims[0]
    games = [GameMatrix(rng.uniform(-1, 1, size=(labels, labels))) for _ in range(n)]
    embedded = embed_payoff(PayoffModel.multigame(games))
    cfg = IntegratorConfig(scheme='rk4-tangent', h=1e-4, t_end=5.0, stride=500)

    p0 = embed_T(random_assignment(rng, n, labels))
    joint = integrate_metasimplex(embedded, p0, cfg)
    error = np.max(np.abs(recombine(decompose_multigame(games, p0, cfg)) - joint.points))

    correlated = 0.5 * embed_T(random_near_vertex(rng, n, labels, labels=[0] * n)) \
        + 0.5 * embed_T(random_near_vertex(rng, n, labels, labels=[1] * n))
    joint = integrate_metasimplex(embedded, correlated, cfg)
    product = recombine(decompose_multigame(games, rank1_projection(correlated, n, labels), cfg))
    deviation = float(np.max(np.abs(product - joint.points)))
    return Outcome(error=float(error), passed=bool(error <= c.tolerance and deviation > 1e-3),
                   detail=f'off-manifold deviation {deviation:.3g}')


# dynamics

@check('dynamics', 'potential-ascent', 1e-9, 'potential does not decrease along trajectories', kinds=('potential',),
       dims=((3, 3),))
def _potential_ascent(c: Check) -> Outcome:
    rng = c.rng()
    n, labels = c.dims[0]
    a = rng.normal(size=(n * labels, n * labels))
    model = PayoffModel.potential_quadratic((a + a.T) / 2, n, labels)
    cfg = IntegratorConfig(scheme='rk4-tangent', h=1e-2, t_end=10.0, stride=10)
    error = 0.0
    for _ in range(5):
        potential = integrate_multipop(model, random_assignment(rng, n, labels), cfg).potential
        scale = max(1.0, np.max(np.abs(potential)))
        error = max(error, np.max(-np.diff(potential)) / scale, 0.0)
    return _within(error, c.tolerance)


@check('dynamics', 'payoff-shift-invariance', 1e-10,
       'adding a constant to the payoff of a node changes neither trajectories nor Nash verdicts', kinds=('egn',),
       dims=((3, 3),))
def _payoff_shift_invariance(c: Check) -> Outcome:
    rng = c.rng()
    n, labels = c.dims[0]
    model = PayoffModel.egn(GraphWeights.path_graph(n), GameMatrix(rng.uniform(-1, 1, size=(labels, labels))))
    shifts = rng.uniform(-10, 10, size=(n, 1))
    shifted = PayoffModel.custom(lambda W: eval_payoff(model, W) + shifts, n, labels)
    cfg = IntegratorConfig(scheme='geometric-euler', h=1e-2, t_end=2.0)
    W0 = random_assignment(rng, n, labels)
    error = np.max(np.abs(integrate_multipop(model, W0, cfg).states - integrate_multipop(shifted, W0, cfg).states))
    verdicts = 0
    for vertex in itertools.product(range(labels), repeat=n):
        W = np.eye(labels)[list(vertex)]
        verdicts += is_nash(model, W).is_nash != is_nash(shifted, W).is_nash
    return Outcome(error=float(error), passed=bool(error <= c.tolerance and verdicts == 0),
                   detail=f'{verdicts} differing Nash verdicts')


@check('dynamics', 'simplex-preservation', 1e-10, 'every scheme keeps states on the assignment manifold',
       kinds=('egn',), dims=((3, 3),))
def _simplex_preservation(c: Check) -> Outcome:
    rng = c.rng()
    n, labels = c.dims[0]
    model = PayoffModel.egn(GraphWeights.path_graph(n), GameMatrix(rng.uniform(-2, 2, size=(labels, labels))))
    W0 = random_assignment(rng, n, labels)
    error = 0.0
    positive = True
    for scheme in ('geometric-euler', 'rk4-tangent', 'rk4-ambient-reference'):
        states = integrate_multipop(model, W0, IntegratorConfig(scheme=scheme, h=1e-2, t_end=5.0)).states
        error = max(error, np.max(np.abs(states.sum(axis=2) - 1)))
        positive = positive and bool(np.all(states > 0))
    return Outcome(error=float(error), passed=bool(error <= c.tolerance and positive))


# equilibria

@check('equilibria', 'embedded-nash', 0, 'Nash equilibria correspond to Nash equilibria of the embedded game',
       kinds=('egn',), dims=((2, 2),))
def _embedded_nash(c: Check) -> Outcome:
    rng = c.rng()
    model = PayoffModel.egn(GraphWeights([[0, 1], [1, 0]]), GameMatrix(np.eye(2)))
    embedded = embed_payoff(model)
    rows = [(1.0, 0.0), (0.0, 1.0), (0.5, 0.5), (0.25, 0.75)]
    disagreements = 0
    for W in itertools.product(rows, repeat=2):
        disagreements += not check_embedded_nash(model, np.array(W), embedded=embedded)
    for _ in range(20):
        disagreements += not check_embedded_nash(model, random_assignment(rng, 2, 2), embedded=embedded)
    for flat in range(embedded.size):
        vertex = np.zeros(embedded.size)
        vertex[flat] = 1.0
        if is_nash_meta(embedded, vertex).is_nash:
            disagreements += not is_nash(model, marginalize_M(vertex, 2, 2)).is_nash
    return _within(disagreements, c.tolerance)


@check('equilibria', 'embedded-ess', 1e-12, 'stability values agree between a game and its embedding',
       kinds=('egn',), dims=((3, 2), (2, 2)))
def _embedded_ess(c: Check) -> Outcome:
    rng = c.rng()
    n, labels = 3, 2
    model = PayoffModel.egn(GraphWeights.path_graph(n), GameMatrix(rng.uniform(-1, 1, size=(labels, labels))))
    embedded = embed_payoff(model)
    error = 0.0
    for _ in range(500):
        W, W_star = random_assignment(rng, n, labels), random_assignment(rng, n, labels)
        joint = np.dot(embed_T(W) - embed_T(W_star), embedded(embed_T(W)))
        error = max(error, abs(joint - np.sum((W - W_star) * eval_payoff(model, W))))

    verdicts = 0
    for b in (-np.eye(2), np.eye(2)):
        game = PayoffModel.egn(GraphWeights.identity(2), GameMatrix(b))
        center = np.full((2, 2), 0.5)
        direct = ess_sample_check(game, center, samples=200)
        joint = ess_sample_check(game, center, samples=200, embedded=embed_payoff(game))
        verdicts += direct.verdict != joint.verdict
        error = max(error, abs(direct.worst_value - joint.worst_value))
    return Outcome(error=float(error), passed=bool(error <= c.tolerance and verdicts == 0),
                   detail=f'{verdicts} differing verdicts')


@check('equilibria', 'potential-embedding', 1e-6, 'embedded game has the potential J o M', kinds=('potential',),
       dims=((3, 2),))
def _potential_embedding(c: Check) -> Outcome:
    rng = c.rng()
    n, labels = c.dims[0]
    a = rng.normal(size=(n * labels, n * labels))
    model = PayoffModel.potential_quadratic((a + a.T) / 2, n, labels)
    step = 1e-5
    error = 0.0
    for _ in range(20):
        W = random_assignment(rng, n, labels)
        error = max(error, abs(embedded_potential_value(model, embed_T(W)) - potential_value(model, W)))
        p = rng.dirichlet(np.ones(labels ** n))
        value = functools.partial(embedded_potential_value, model)
        numeric = np.array([value(p + step * e) - value(p - step * e) for e in np.eye(len(p))]) / (2 * step)
        error = max(error, np.max(np.abs(numeric - embedded_potential_gradient(model, p))))
    return _within(error, c.tolerance)


@check('equilibria', 'convergence-to-nash', 1e-6, 'trajectories of potential games converge to Nash equilibria',
       kinds=('sflow', 'potential'), dims=((4, 3),))
def _convergence_to_nash(c: Check) -> Outcome:
    rng = c.rng()
    n, labels = c.dims[0]
    omega = GraphWeights.path_graph(n)
    sflow = PayoffModel.sflow(omega, labels)
    potential = PayoffModel.potential_quadratic(np.kron(omega.omega, np.eye(labels)), n, labels)
    cfg = IntegratorConfig(scheme='rk4-tangent', h=0.05, t_end=50.0, stride=100)
    violation = 0.0
    non_extremal = 0
    decreasing = 0
    for start in range(20):
        W0 = random_assignment(rng, n, labels)
        report = convergence_report(integrate_multipop(sflow, W0, cfg), sflow)
        violation = max(violation, report.nash.violation)
        non_extremal += report.limit_class != 'extremal'
        if start < 5:
            potential_report = convergence_report(integrate_multipop(potential, W0, cfg), potential)
            decreasing += not potential_report.potential_nondecreasing
    return Outcome(error=violation, passed=bool(violation <= c.tolerance and non_extremal == 0 and decreasing == 0),
                   detail=f'{non_extremal} non-extremal limits, {decreasing} decreasing potentials')


# learning

@check('learning', 'adjoint-scalar', 1e-6, 'adjoint gradient of a linear scalar ODE matches the closed form')
def _adjoint_scalar(c: Check) -> Outcome:
    v0, rate, horizon = 1.5, 0.7, 1.0
    problem = LearnProblem(
        field=lambda v, p, t: p * v,
        v0=np.array([v0]),
        params=np.array([rate]),
        horizon=horizon,
        loss=lambda v: float(v[0]),
        loss_gradient=lambda v: np.ones(1),
        vjp_state=lambda v, p, t, lam: p * lam,
        vjp_params=lambda v, p, t, lam: v * lam,
    )
    cfg = IntegratorConfig(h=1e-4)
    expected = v0 * horizon * np.exp(rate * horizon)
    error = max(abs(adjoint_gradient(problem, cfg)[0] - expected),
                abs(finite_diff_gradient(problem, cfg)[0] - expected))
    return _within(error, c.tolerance)


def egn_learning_problem(rng: np.random.Generator, horizon: float = 2.0) -> LearnProblem:
    """The gradient test problem: EGN tangent dynamics on a 4-node path with two labels."""
    n, labels = 4, 2
    v0 = project_tangent(rng.normal(size=(n, labels)))
    target = np.eye(labels)[[0, 0, 1, 1]]
    b = np.array([[1.0, -0.5], [0.3, 0.8]])
    return egn_tangent_problem(GraphWeights.path_graph(n), b, v0, target, horizon)


@check('learning', 'adjoint-egn', 1e-4, 'adjoint gradient for the game matrix matches central differences',
       kinds=('egn',), dims=((4, 2),))
def _adjoint_egn(c: Check) -> Outcome:
    problem = egn_learning_problem(c.rng())
    cfg = IntegratorConfig(h=1e-4)
    adjoint = adjoint_gradient(problem, cfg)
    numeric = finite_diff_gradient(problem, cfg, step=1e-5)
    return _within(np.max(np.abs(adjoint - numeric)) / np.max(np.abs(numeric)), c.tolerance)


@check('learning', 'desk-scale-learning', 0.05, 'learned game matrix labels a striped 8 x 8 grid',
       tags=('slow',), kinds=('egn',), dims=((64, 3),))
def _desk_scale_learning(c: Check) -> Outcome:
    dataset = labeling_dataset(seed=zlib.crc32(c.name.encode()))
    result = learn_egn(dataset.target, dataset.omega, np.eye(dataset.c), LearnConfig(), v0=dataset.v0)
    error = 1.0 - result.accuracy
    improved = result.best_loss < result.initial_loss
    return Outcome(error=error, passed=bool(error <= c.tolerance and improved),
                   detail=f'loss {result.initial_loss:.4g} -> {result.best_loss:.4g}')
