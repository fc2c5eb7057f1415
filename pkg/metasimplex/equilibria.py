"""
Nash equilibria and evolutionarily stable states of multi-population games and of their embedded games.

A state ``W`` of the closed assignment manifold is a Nash equilibrium if for every node ``i`` every supported label
``j`` earns a payoff at least as large as every other label ``k``. The meta-simplex variant applies the same
definition to the single population of joint assignments.

Evolutionary stability can only be refuted by sampling: :func:`ess_sample_check` evaluates ``<W - W*, F(W)>`` on a
seeded sample of neighbouring states and reports ``ess-consistent`` when no sample is non-negative.
"""

import itertools
import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
from dataclasses_json import dataclass_json
from numpy.typing import ArrayLike

from metasimplex.dynamics import Trajectory
from metasimplex.errors import DimensionMismatch, KindMismatch, NotStationaryWarning
from metasimplex.meta import SUPPORT_THRESHOLD, embed_T, support
from metasimplex.payoff import EmbeddedPayoff, PayoffModel, embed_payoff, eval_payoff, payoff_matrix
from metasimplex.simplex import AssignmentState, lift_W, project_tangent, replicator_apply

__all__ = [
    'NASH_TOL', 'LIMIT_NASH_TOL', 'DEDUP_TOL',
    'NashReport', 'EnumerationResult', 'EssReport', 'ConvergenceReport',
    'is_nash', 'is_nash_meta', 'check_embedded_nash', 'nash_enumerate_small',
    'ess_sample_values', 'ess_sample_check', 'convergence_report',
]

logger = logging.getLogger(__name__)

#: Tolerance for equilibria of exactly known states.
NASH_TOL = 1e-9

#: Tolerance for limits of numerical trajectories.
LIMIT_NASH_TOL = 1e-6

#: Enumerated equilibria closer than this (maximum norm) are merged.
DEDUP_TOL = 1e-7


@dataclass_json
@dataclass(frozen=True)
class NashReport:
    """
    Outcome of a Nash test.

    `support_gap` holds per node ``max_k F[i, k] - min_{j in supp} F[i, j]``, which is zero exactly when the payoff
    lies in the normal cone of the state space at the state. `violation` is the largest gap.
    """
    state: List[List[float]]
    supports: List[List[int]]
    payoffs: List[List[float]]
    support_gap: List[float]
    violation: float
    tol: float
    is_nash: bool


def _nash_report(W: np.ndarray, F: np.ndarray, tol: float, threshold: float) -> NashReport:
    supports = support(W, threshold)
    gaps = []
    for row, supported in zip(F, supports):
        gaps.append(float(row.max() - row[supported].min()) if supported else 0.0)
    violation = max(gaps)
    return NashReport(
        state=W.tolist(),
        supports=supports,
        payoffs=F.tolist(),
        support_gap=gaps,
        violation=violation,
        tol=tol,
        is_nash=violation <= tol,
    )


def is_nash(model: PayoffModel, W: ArrayLike, tol: float = NASH_TOL,
            threshold: float = SUPPORT_THRESHOLD) -> NashReport:
    """
    Tests `W`, which may have zero entries, for being a Nash equilibrium of `model`.

    >>> from metasimplex.payoff import GameMatrix, GraphWeights
    >>> coordination = PayoffModel.egn(GraphWeights.identity(1), GameMatrix(np.eye(2)))
    >>> is_nash(coordination, [[1.0, 0.0]]).is_nash
    True
    """
    W = np.asarray(W, dtype=float)
    return _nash_report(W, eval_payoff(model, W), tol, threshold)


def is_nash_meta(embedded: EmbeddedPayoff, p: ArrayLike, tol: float = NASH_TOL,
                 threshold: float = SUPPORT_THRESHOLD) -> NashReport:
    """Nash test on the meta-simplex, i.e. :func:`is_nash` for a single population of joint assignments."""
    p = np.asarray(p, dtype=float)
    return _nash_report(p[None, :], embedded(p)[None, :], tol, threshold)


def check_embedded_nash(model: PayoffModel, W: ArrayLike, tol: float = NASH_TOL, *,
                        embedded: Optional[EmbeddedPayoff] = None, cap: Optional[int] = None) -> bool:
    """
    Whether `W` is a Nash equilibrium of `model` exactly when ``T(W)`` is one of the embedded game.

    A joint assignment counts as supported when every node supports its label, the same rule as
    :func:`~metasimplex.meta.embedded_support_matches`.
    """
    embedded = embed_payoff(model, cap) if embedded is None else embedded
    W = np.asarray(W, dtype=float)
    multipop = is_nash(model, W, tol)
    trimmed = embed_T(np.where(W > SUPPORT_THRESHOLD, W, 0.0), cap)
    joint = _nash_report(trimmed[None, :], embedded(embed_T(W, cap))[None, :], tol, threshold=0.0)
    logger.debug('Nash violation %.3g on the manifold, %.3g on the meta-simplex', multipop.violation, joint.violation)
    return multipop.is_nash == joint.is_nash


@dataclass_json
@dataclass(frozen=True)
class EnumerationResult:
    """
    Equilibria found by support enumeration. `degenerate` is set when some support profile has a singular
    indifference system, in which case the listed equilibria are representatives of a continuum.
    """
    equilibria: List[List[List[float]]]
    degenerate: bool

    @property
    def states(self) -> List[np.ndarray]:
        return [np.array(state) for state in self.equilibria]


def _nonempty_subsets(c: int):
    for size in range(1, c + 1):
        yield from itertools.combinations(range(c), size)


def nash_enumerate_small(model: PayoffModel, tol: float = NASH_TOL, dedup: float = DEDUP_TOL) -> EnumerationResult:
    """
    Enumerates the Nash equilibria of a small linear game by solving the indifference system of every support
    profile.

    >>> from metasimplex.payoff import GameMatrix, GraphWeights
    >>> coordination = PayoffModel.egn(GraphWeights.identity(1), GameMatrix(np.eye(2)))
    >>> len(nash_enumerate_small(coordination).equilibria)
    3

    :raises KindMismatch: If `model` is not linear.
    :raises DimensionMismatch: If ``n > 3`` or ``c > 3``.
    """
    if not model.is_linear:
        raise KindMismatch(f'Support enumeration needs a linear payoff, got kind {model.kind}')
    n, c = model.dims
    if n > 3 or c > 3:
        raise DimensionMismatch(f'Support enumeration is limited to n <= 3 and c <= 3, got n={n}, c={c}')
    a_bar = payoff_matrix(model)
    found: List[np.ndarray] = []
    degenerate = False

    for profile in itertools.product(list(_nonempty_subsets(c)), repeat=n):
        columns = [i * c + j for i, labels in enumerate(profile) for j in labels]
        unknowns = len(columns) + n
        system = np.zeros((unknowns, unknowns))
        rhs = np.zeros(unknowns)
        row = 0
        for i, labels in enumerate(profile):
            for j in labels:
                # payoff of supported label equals the node value
                system[row, :len(columns)] = a_bar[i * c + j, columns]
                system[row, len(columns) + i] = -1.0
                row += 1
        for i, labels in enumerate(profile):
            system[row, [columns.index(i * c + j) for j in labels]] = 1.0
            rhs[row] = 1.0
            row += 1

        solution, _, rank, _ = np.linalg.lstsq(system, rhs, rcond=None)
        if np.max(np.abs(system @ solution - rhs)) > 1e-9:
            continue
        if rank < unknowns:
            degenerate = True
        if np.any(solution[:len(columns)] < -1e-12):
            continue
        W = np.zeros(n * c)
        W[columns] = np.maximum(solution[:len(columns)], 0.0)
        W = W.reshape(n, c)
        W /= W.sum(axis=1, keepdims=True)
        if not is_nash(model, W, tol).is_nash:
            continue
        if any(np.max(np.abs(W - other)) <= dedup for other in found):
            continue
        found.append(W)

    logger.info('Support enumeration found %d equilibria%s', len(found), ' (degenerate)' if degenerate else '')
    return EnumerationResult(equilibria=[W.tolist() for W in found], degenerate=degenerate)


@dataclass_json
@dataclass(frozen=True)
class EssReport:
    """
    Outcome of :func:`ess_sample_check`. `verdict` is ``refuted`` exactly when `worst_value` is non-negative; an
    ``ess-consistent`` verdict is not a proof of stability.
    """
    state: List[List[float]]
    radius: float
    samples: int
    seed: int
    worst_value: float
    worst_index: int
    verdict: str
    embedded: bool = False

    @property
    def refuted(self) -> bool:
        return self.verdict == 'refuted'


def _ess_neighbours(W_star: np.ndarray, radius: float, samples: int, rng: np.random.Generator) -> np.ndarray:
    n, c = W_star.shape
    dimension = n * (c - 1)
    directions = project_tangent(rng.standard_normal((samples, n, c)))
    directions /= np.linalg.norm(directions, axis=(1, 2), keepdims=True)
    # radii uniform in the ball, never zero
    radii = radius * (1.0 - rng.random(samples)) ** (1.0 / dimension)
    return np.stack([lift_W(W_star, r * V) for r, V in zip(radii, directions)])


def ess_sample_values(model: PayoffModel, W_star: ArrayLike, radius: float = 0.1, samples: int = 1000,
                      seed: int = 0, *, embedded: Optional[EmbeddedPayoff] = None) -> np.ndarray:
    """
    Values ``<W - W*, F(W)>`` on `samples` states ``lift(W*, V)`` with tangent vectors ``V`` uniform in the ball of
    the given `radius`. With `embedded` the values ``<T(W) - T(W*), F(T(W))>`` of the embedded game are returned
    for the same samples.
    """
    W_star = np.array(AssignmentState(W_star))
    neighbours = _ess_neighbours(W_star, radius, samples, np.random.default_rng(seed))
    if embedded is None:
        return np.array([np.sum((W - W_star) * eval_payoff(model, W)) for W in neighbours])
    p_star = embed_T(W_star, embedded.cap)
    values = []
    for W in neighbours:
        p = embed_T(W, embedded.cap)
        values.append(np.dot(p - p_star, embedded(p)))
    return np.array(values)


def ess_sample_check(model: PayoffModel, W_star: ArrayLike, radius: float = 0.1, samples: int = 1000,
                     seed: int = 0, *, embedded: Optional[EmbeddedPayoff] = None) -> EssReport:
    """
    Tries to refute evolutionary stability of the interior state `W_star` by sampling.

    >>> from metasimplex.payoff import GameMatrix, GraphWeights
    >>> model = PayoffModel.egn(GraphWeights.identity(1), GameMatrix(-np.eye(2)))
    >>> ess_sample_check(model, [[0.5, 0.5]], samples=100).verdict
    'ess-consistent'
    """
    values = ess_sample_values(model, W_star, radius, samples, seed, embedded=embedded)
    worst_index = int(np.argmax(values))
    worst_value = float(values[worst_index])
    return EssReport(
        state=np.asarray(W_star, dtype=float).tolist(),
        radius=radius,
        samples=samples,
        seed=seed,
        worst_value=worst_value,
        worst_index=worst_index,
        verdict='refuted' if worst_value >= 0 else 'ess-consistent',
        embedded=embedded is not None,
    )


@dataclass_json
@dataclass(frozen=True)
class ConvergenceReport:
    """
    Classification of the final sample of a trajectory.

    `limit_class` is ``extremal`` when every row is within the extremal tolerance of a vertex, ``boundary`` when some
    entry is below it and ``interior`` otherwise. `nash` tests the rounded limit.
    """
    limit_class: str
    final_state: List[List[float]]
    rounded_state: List[List[float]]
    velocity: float
    stationary: bool
    nash: NashReport
    potential_history: List[float] = field(default_factory=list)
    potential_nondecreasing: Optional[bool] = None


def _rounded(X: np.ndarray, extremal_tol: float) -> np.ndarray:
    rounded = np.where(X < extremal_tol, 0.0, X)
    return rounded / rounded.sum(axis=1, keepdims=True)


def convergence_report(trajectory: Trajectory, model: Union[PayoffModel, EmbeddedPayoff], tol: float = LIMIT_NASH_TOL,
                       *, stationarity_tol: float = 1e-6, extremal_tol: float = 1e-3,
                       monotonicity_tol: float = 1e-12) -> ConvergenceReport:
    """
    Classifies the limit of `trajectory` and tests it for being a Nash equilibrium of `model`.

    Issues a :class:`NotStationaryWarning` if the replicator velocity at the final sample exceeds `stationarity_tol`.
    """
    X = trajectory.states[-1]
    if isinstance(model, EmbeddedPayoff):
        payoff = model(X[0])[None, :]
    else:
        payoff = eval_payoff(model, X)
    velocity = float(np.max(np.abs(replicator_apply(X, payoff))))
    stationary = velocity <= stationarity_tol
    if not stationary:
        warnings.warn(f'Trajectory is not stationary at t={trajectory.times[-1]:g}, velocity {velocity:.3g}',
                      NotStationaryWarning)

    if np.all(X.max(axis=1) >= 1 - extremal_tol):
        limit_class = 'extremal'
    elif np.any(X < extremal_tol):
        limit_class = 'boundary'
    else:
        limit_class = 'interior'
    rounded = _rounded(X, extremal_tol) if limit_class != 'interior' else X
    if isinstance(model, EmbeddedPayoff):
        nash = is_nash_meta(model, rounded[0], tol)
    else:
        nash = is_nash(model, rounded, tol)

    history: List[float] = []
    nondecreasing = None
    if trajectory.potential is not None:
        history = trajectory.potential.tolist()
        scale = max(1.0, float(np.max(np.abs(trajectory.potential))))
        nondecreasing = bool(np.all(np.diff(trajectory.potential) >= -monotonicity_tol * scale))

    logger.info('Limit is %s, Nash violation %.3g, velocity %.3g', limit_class, nash.violation, velocity)
    return ConvergenceReport(
        limit_class=limit_class,
        final_state=X.tolist(),
        rounded_state=rounded.tolist(),
        velocity=velocity,
        stationary=stationary,
        nash=nash,
        potential_history=history,
        potential_nondecreasing=nondecreasing,
    )
