"""
Payoff functions ``F: W -> R^{n x c}`` of multi-population games and their counterparts on the meta-simplex.

Payoff models are immutable and built through the classmethods of :class:`PayoffModel`:

>>> model = PayoffModel.egn(GraphWeights([[0, 1], [1, 0]]), GameMatrix(np.eye(2)))
>>> eval_payoff(model, [[0.2, 0.8], [0.3, 0.7]])
array([[0.3, 0.7],
       [0.2, 0.8]])

Matrices act on states vectorized row by row, so the linear kinds have the payoff matrices

* ``sflow``: ``kron(omega, I_c)``,
* ``egn``: ``kron(omega, B.T)``, i.e. ``F(W) = omega @ W @ B``,
* ``multigame``: ``block_diag(A_1, ..., A_n)``, i.e. ``F(W)_i = A_i @ W_i``,
* ``linear``: any ``nc x nc`` matrix.

Custom callbacks and potential gradients must be pure functions of the state.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import block_diag
from typing_extensions import Literal

from metasimplex.errors import DimensionMismatch, InvalidState, KindMismatch, NumericalFailure
from metasimplex.meta import check_size, lift_Q, marginalize_M, multi_indices, q_matrix
from metasimplex.simplex import project_tangent

__all__ = [
    'PayoffKind', 'LINEAR_KINDS', 'SYMMETRY_TOL',
    'GraphWeights', 'GameMatrix', 'PayoffModel', 'EmbeddedPayoff',
    'eval_payoff', 'payoff_matrix', 'payoff_jacobian', 'mean_payoff', 'embed_payoff', 'multigame_matrix',
    'potential_value', 'potential_gradient', 'embedded_potential_value', 'embedded_potential_gradient',
]

logger = logging.getLogger(__name__)

PayoffKind = Literal['sflow', 'egn', 'linear', 'multigame', 'potential', 'custom']

#: Kinds whose payoff is a matrix acting on the row-wise vectorized state.
LINEAR_KINDS = frozenset({'sflow', 'egn', 'linear', 'multigame'})

#: Largest asymmetry accepted for quadratic potentials.
SYMMETRY_TOL = 1e-12

StateFunction = Callable[[np.ndarray], np.ndarray]


def _finite_matrix(values: ArrayLike, name: str) -> np.ndarray:
    matrix = np.array(values, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatch(f'{name} must be a square matrix, got shape {matrix.shape}')
    if not np.all(np.isfinite(matrix)):
        raise InvalidState(f'{name} has non-finite entries')
    matrix.setflags(write=False)
    return matrix


@dataclass(frozen=True, eq=False)
class GraphWeights:
    """Weighted adjacency matrix ``omega`` of the ``n`` interacting populations."""
    omega: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'omega', _finite_matrix(self.omega, 'GraphWeights'))

    @property
    def n(self) -> int:
        return self.omega.shape[0]

    @property
    def symmetric(self) -> bool:
        return bool(np.allclose(self.omega, self.omega.T, rtol=0, atol=SYMMETRY_TOL))

    @classmethod
    def identity(cls, n: int) -> 'GraphWeights':
        return cls(np.eye(n))

    @classmethod
    def path_graph(cls, n: int, weighting: Literal['metropolis', 'rows', 'none'] = 'metropolis') -> 'GraphWeights':
        """
        A path ``0 - 1 - ... - n-1`` with self loops.

        The default ``metropolis`` weighting is symmetric and row-stochastic at the same time.

        >>> GraphWeights.path_graph(3).omega
        array([[0.66666667, 0.33333333, 0.        ],
               [0.33333333, 0.33333333, 0.33333333],
               [0.        , 0.33333333, 0.66666667]])
        """
        adjacency = np.eye(n, k=1) + np.eye(n, k=-1)
        return cls(_weighted(adjacency, weighting))

    @classmethod
    def grid_graph(cls, rows: int, cols: int, radius: int = 1,
                   weighting: Literal['metropolis', 'rows', 'none'] = 'rows') -> 'GraphWeights':
        """
        Square neighbourhoods of side ``2 * radius + 1`` on a ``rows x cols`` pixel grid, nodes in row-major order.
        """
        row, col = np.divmod(np.arange(rows * cols), cols)
        adjacency = (np.abs(row[:, None] - row[None, :]) <= radius) & (np.abs(col[:, None] - col[None, :]) <= radius)
        adjacency = adjacency.astype(float)
        np.fill_diagonal(adjacency, 0.0)
        return cls(_weighted(adjacency, weighting))


def _weighted(adjacency: np.ndarray, weighting: str) -> np.ndarray:
    degree = adjacency.sum(axis=1)
    if weighting == 'metropolis':
        omega = adjacency / (1 + np.maximum(degree[:, None], degree[None, :]))
        omega[np.diag_indices_from(omega)] = 1 - omega.sum(axis=1)
        return omega
    omega = adjacency + np.eye(len(adjacency))
    if weighting == 'rows':
        return omega / omega.sum(axis=1, keepdims=True)
    if weighting == 'none':
        return omega
    raise ValueError(f'Unknown weighting "{weighting}"')


@dataclass(frozen=True, eq=False)
class GameMatrix:
    """A ``c x c`` payoff matrix of a single two-player game."""
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'b', _finite_matrix(self.b, 'GameMatrix'))

    @property
    def c(self) -> int:
        return self.b.shape[0]

    @property
    def symmetric(self) -> bool:
        return bool(np.allclose(self.b, self.b.T, rtol=0, atol=SYMMETRY_TOL))


@dataclass(frozen=True, eq=False)
class PayoffModel:
    """
    A payoff function on ``n x c`` assignment states.

    Use the classmethods instead of the constructor; they check parameter shapes against the dimensions.
    """
    kind: PayoffKind
    n: int
    c: int
    omega: Optional[GraphWeights] = None
    game: Optional[GameMatrix] = None
    a_bar: Optional[np.ndarray] = None
    games: Tuple[GameMatrix, ...] = ()
    callback: Optional[StateFunction] = None
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    potential: Optional[Callable[[np.ndarray], float]] = field(default=None)

    @property
    def dims(self) -> Tuple[int, int]:
        return self.n, self.c

    @property
    def is_linear(self) -> bool:
        return self.kind in LINEAR_KINDS

    @property
    def is_quadratic_potential(self) -> bool:
        return self.kind == 'potential' and self.a_bar is not None

    @classmethod
    def sflow(cls, omega: GraphWeights, c: int) -> 'PayoffModel':
        """Similarity-flow payoff ``F(W) = omega @ W``: every node sees the weighted average of its neighbours."""
        return cls(kind='sflow', n=omega.n, c=c, omega=omega)

    @classmethod
    def egn(cls, omega: GraphWeights, game: GameMatrix) -> 'PayoffModel':
        """Evolutionary game on a network, ``F(W) = omega @ W @ B``."""
        return cls(kind='egn', n=omega.n, c=game.c, omega=omega, game=game)

    @classmethod
    def linear(cls, a_bar: ArrayLike, n: int, c: int) -> 'PayoffModel':
        return cls(kind='linear', n=n, c=c, a_bar=_payoff_matrix_of_size(a_bar, n, c))

    @classmethod
    def multigame(cls, games: Sequence[GameMatrix]) -> 'PayoffModel':
        """Every node plays its own game against itself, ``F(W)_i = A_i @ W_i``."""
        games = tuple(games)
        if not games:
            raise DimensionMismatch('A multi-game needs at least one game')
        c = games[0].c
        if any(game.c != c for game in games):
            raise DimensionMismatch(f'All games of a multi-game must be {c} x {c}')
        return cls(kind='multigame', n=len(games), c=c, games=games)

    @classmethod
    def potential_quadratic(cls, a_bar: ArrayLike, n: int, c: int) -> 'PayoffModel':
        """
        Payoff ``F = P0 grad J`` of the quadratic potential ``J(W) = 1/2 <s, a_bar s>`` with ``s`` the row-wise
        vectorized state.

        :raises KindMismatch: If `a_bar` is not symmetric within :data:`SYMMETRY_TOL`.
        """
        a_bar = _payoff_matrix_of_size(a_bar, n, c)
        asymmetry = float(np.max(np.abs(a_bar - a_bar.T)))
        if asymmetry > SYMMETRY_TOL:
            raise KindMismatch(f'A quadratic potential needs a symmetric matrix, asymmetry is {asymmetry}')
        return cls(kind='potential', n=n, c=c, a_bar=a_bar)

    @classmethod
    def potential_from(cls, potential: Callable[[np.ndarray], float], gradient: StateFunction, n: int,
                       c: int) -> 'PayoffModel':
        """Payoff ``F = P0 gradient(W)`` of an arbitrary potential with its Euclidean gradient."""
        return cls(kind='potential', n=n, c=c, potential=potential, callback=gradient)

    @classmethod
    def custom(cls, func: StateFunction, n: int, c: int,
               jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> 'PayoffModel':
        """
        An arbitrary payoff. `jacobian` returns the ``nc x nc`` derivative of the row-wise vectorized payoff; central
        differences are used if it is omitted.
        """
        return cls(kind='custom', n=n, c=c, callback=func, jacobian=jacobian)

    @classmethod
    def zero(cls, n: int, c: int) -> 'PayoffModel':
        return cls.linear(np.zeros((n * c, n * c)), n, c)


def _payoff_matrix_of_size(a_bar: ArrayLike, n: int, c: int) -> np.ndarray:
    a_bar = _finite_matrix(a_bar, 'Payoff matrix')
    if a_bar.shape != (n * c, n * c):
        raise DimensionMismatch(f'Payoff matrix for n={n}, c={c} must be {n * c} x {n * c}, got {a_bar.shape}')
    return a_bar


def _state(model: PayoffModel, W: ArrayLike) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.shape != model.dims:
        raise DimensionMismatch(f'Payoff model for n={model.n}, c={model.c} got a state of shape {W.shape}')
    return W


def eval_payoff(model: PayoffModel, W: ArrayLike) -> np.ndarray:
    """
    Evaluates the payoff at `W`, which may lie on the boundary of the assignment manifold.

    :raises DimensionMismatch: If `W` does not have the dimensions of `model`.
    :raises NumericalFailure: If the payoff has non-finite entries.
    """
    W = _state(model, W)
    if model.kind == 'sflow':
        F = model.omega.omega @ W
    elif model.kind == 'egn':
        F = model.omega.omega @ W @ model.game.b
    elif model.kind == 'linear':
        F = (model.a_bar @ W.ravel()).reshape(model.dims)
    elif model.kind == 'multigame':
        F = np.stack([game.b @ row for game, row in zip(model.games, W)])
    else:
        F = np.asarray(potential_gradient(model, W) if model.kind == 'potential' else model.callback(W), dtype=float)
        if F.shape != model.dims:
            raise DimensionMismatch(f'Payoff callback returned shape {F.shape}, expected {model.dims}')
        if model.kind == 'potential':
            F = project_tangent(F)
    if not np.all(np.isfinite(F)):
        raise NumericalFailure(f'Payoff of kind {model.kind} is not finite')
    return F


def payoff_matrix(model: PayoffModel) -> np.ndarray:
    """
    The ``nc x nc`` matrix of a linear payoff, or of the quadratic form of a quadratic potential.

    >>> payoff_matrix(PayoffModel.sflow(GraphWeights.identity(2), c=1))
    array([[1., 0.],
           [0., 1.]])

    :raises KindMismatch: For custom payoffs and potentials given by callbacks.
    """
    if model.kind == 'sflow':
        return np.kron(model.omega.omega, np.eye(model.c))
    if model.kind == 'egn':
        return np.kron(model.omega.omega, model.game.b.T)
    if model.kind == 'multigame':
        return block_diag(*(game.b for game in model.games))
    if model.a_bar is not None:
        return np.array(model.a_bar)
    raise KindMismatch(f'Payoff of kind {model.kind} has no payoff matrix')


def payoff_jacobian(model: PayoffModel, W: ArrayLike, step: float = 1e-6) -> np.ndarray:
    """Derivative of the row-wise vectorized payoff with respect to the row-wise vectorized state."""
    W = _state(model, W)
    if model.is_linear:
        return payoff_matrix(model)
    if model.is_quadratic_potential:
        return np.kron(np.eye(model.n), np.eye(model.c) - 1.0 / model.c) @ model.a_bar
    if model.jacobian is not None:
        return np.asarray(model.jacobian(W), dtype=float)
    logger.debug('No analytic Jacobian for payoff of kind %s, using central differences', model.kind)
    size = W.size
    jacobian = np.empty((size, size))
    for k in range(size):
        offset = np.zeros(size)
        offset[k] = step
        offset = offset.reshape(W.shape)
        jacobian[:, k] = (eval_payoff(model, W + offset) - eval_payoff(model, W - offset)).ravel() / (2 * step)
    return jacobian


def mean_payoff(model: PayoffModel, W: ArrayLike) -> float:
    """Sum over nodes of the mean payoff ``<W_i, F(W)_i>``."""
    W = _state(model, W)
    return float(np.sum(W * eval_payoff(model, W)))


@dataclass(frozen=True, eq=False)
class EmbeddedPayoff:
    """
    The payoff ``Q o F o M`` on the meta-simplex of `model`.

    `cap` bounds every lift to the meta-simplex and is the one passed to :func:`embed_payoff`. For linear kinds
    `matrix` is the explicit ``N x N`` matrix ``Q A Q^T``, built on first access.
    """
    model: PayoffModel
    cap: Optional[int] = None

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def c(self) -> int:
        return self.model.c

    @property
    def size(self) -> int:
        return self.model.c ** self.model.n

    @cached_property
    def matrix(self) -> Optional[np.ndarray]:
        if not self.model.is_linear:
            return None
        Q = q_matrix(self.n, self.c, self.cap)
        matrix = Q @ payoff_matrix(self.model) @ Q.T
        matrix.setflags(write=False)
        return matrix

    def __call__(self, p: ArrayLike) -> np.ndarray:
        return lift_Q(eval_payoff(self.model, marginalize_M(p, self.n, self.c)), self.cap)

    def via_matrix(self, p: ArrayLike) -> np.ndarray:
        if self.matrix is None:
            raise KindMismatch(f'Embedded payoff of kind {self.model.kind} has no explicit matrix')
        return self.matrix @ np.asarray(p, dtype=float)


def embed_payoff(model: PayoffModel, cap: Optional[int] = None) -> EmbeddedPayoff:
    """
    Embeds `model` into the meta-simplex.

    :raises SizeCapExceeded: If ``c**n`` exceeds `cap`.
    """
    check_size(model.n, model.c, cap)
    return EmbeddedPayoff(model=model, cap=cap)


def multigame_matrix(games: Sequence[ArrayLike], cap: Optional[int] = None) -> np.ndarray:
    """
    The ``N x N`` matrix of the joint game ``A[alpha, beta] = sum_i A_i[alpha_i, beta_i]``.

    >>> multigame_matrix([np.eye(2), np.eye(2)])
    array([[2., 1., 1., 0.],
           [1., 2., 0., 1.],
           [1., 0., 2., 1.],
           [0., 1., 1., 2.]])
    """
    games = [game.b if isinstance(game, GameMatrix) else GameMatrix(game).b for game in games]
    n, c = len(games), games[0].shape[0]
    if any(game.shape != (c, c) for game in games):
        raise DimensionMismatch(f'All games must be {c} x {c}')
    indices = multi_indices(n, c, cap)
    joint = np.zeros((len(indices), len(indices)))
    for i, game in enumerate(games):
        joint += game[np.ix_(indices[:, i], indices[:, i])]
    return joint


def _require_potential(model: PayoffModel):
    if model.kind != 'potential':
        raise KindMismatch(f'Payoff of kind {model.kind} has no registered potential')


def potential_value(model: PayoffModel, W: ArrayLike) -> float:
    """
    Value of the potential ``J`` at `W`.

    :raises KindMismatch: If `model` is not of the potential kind.
    """
    _require_potential(model)
    W = _state(model, W)
    if model.is_quadratic_potential:
        s = W.ravel()
        return float(0.5 * s @ model.a_bar @ s)
    if model.potential is None:
        raise KindMismatch('Potential payoff was registered without a potential function')
    return float(model.potential(W))


def potential_gradient(model: PayoffModel, W: ArrayLike) -> np.ndarray:
    """Euclidean gradient of the potential ``J`` at `W` as an ``n x c`` matrix."""
    _require_potential(model)
    W = _state(model, W)
    if model.is_quadratic_potential:
        return (model.a_bar @ W.ravel()).reshape(model.dims)
    return np.asarray(model.callback(W), dtype=float)


def embedded_potential_value(model: PayoffModel, p: ArrayLike) -> float:
    """The potential ``J o M`` of the embedded payoff."""
    return potential_value(model, marginalize_M(p, model.n, model.c))


def embedded_potential_gradient(model: PayoffModel, p: ArrayLike, cap: Optional[int] = None) -> np.ndarray:
    """Euclidean gradient ``Q grad J(M p)`` of :func:`embedded_potential_value`."""
    return lift_Q(potential_gradient(model, marginalize_M(p, model.n, model.c)), cap)
