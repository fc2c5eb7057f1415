"""
Fisher-Rao geometry on the open probability simplex and its node-wise extension to the assignment manifold.

Single-simplex operations act on the last axis of their arguments, so they apply unchanged to a stack of simplex
points. The ``*_W`` variants additionally insist on an ``n x c`` state and a matching argument, which is what the
multi-population code uses.

All operations are pure and return new :class:`numpy.ndarray` objects. The domain types :class:`SimplexPoint`,
:class:`TangentVec`, :class:`AssignmentState` and :class:`AssignmentTangent` validate their invariants on
construction and can be passed anywhere an array is expected.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import softmax

from metasimplex.errors import DimensionMismatch, InvalidState

__all__ = [
    'BOUNDARY_EPS', 'SUM_TOL',
    'SimplexPoint', 'TangentVec', 'AssignmentState', 'AssignmentTangent',
    'project_tangent', 'replicator_apply', 'lift', 'lift_inverse', 'fisher_rao_inner', 'fisher_rao_gradient',
    'chart_e', 'chart_e_inv', 'chart_m', 'chart_m_inv',
    'project_tangent_W', 'replicator_apply_W', 'lift_W',
    'barycenter', 'barycenter_W', 'clamp_renormalize',
    'random_assignment', 'random_near_vertex', 'random_tangent',
]

#: Entries of integrated states are clamped to at least this value after every step.
BOUNDARY_EPS = 1e-15

#: Tolerance for "sums to one" and "sums to zero".
SUM_TOL = 1e-12


def _validated_copy(values: ArrayLike, ndim: int, name: str) -> np.ndarray:
    array = np.array(values, dtype=float)
    if array.ndim != ndim:
        raise DimensionMismatch(f'{name} needs a {ndim}-dimensional array, got shape {array.shape}')
    if not np.all(np.isfinite(array)):
        raise InvalidState(f'{name} has non-finite entries')
    array.setflags(write=False)
    return array


def _check_simplex_rows(rows: np.ndarray, name: str):
    if rows.shape[-1] < 1:
        raise DimensionMismatch(f'{name} needs at least one strategy')
    if np.any(rows <= 0):
        raise InvalidState(f'{name} must be strictly positive, smallest entry is {rows.min()}')
    error = np.max(np.abs(rows.sum(axis=-1) - 1))
    if error > SUM_TOL:
        raise InvalidState(f'{name} must sum to one, deviation is {error}')


def _check_tangent_rows(rows: np.ndarray, name: str):
    error = np.max(np.abs(rows.sum(axis=-1))) if rows.size else 0.0
    if error > SUM_TOL:
        raise InvalidState(f'{name} must sum to zero, deviation is {error}')


class _ArrayValue:
    values: np.ndarray

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class SimplexPoint(_ArrayValue):
    """A point of the open simplex: strictly positive entries summing to one."""
    values: np.ndarray

    def __post_init__(self):
        values = _validated_copy(self.values, 1, 'SimplexPoint')
        _check_simplex_rows(values, 'SimplexPoint')
        object.__setattr__(self, 'values', values)


@dataclass(frozen=True, eq=False)
class TangentVec(_ArrayValue):
    """A vector of the tangent space, entries summing to zero."""
    values: np.ndarray

    def __post_init__(self):
        values = _validated_copy(self.values, 1, 'TangentVec')
        _check_tangent_rows(values, 'TangentVec')
        object.__setattr__(self, 'values', values)


@dataclass(frozen=True, eq=False)
class AssignmentState(_ArrayValue):
    """
    A point of the assignment manifold, i.e. an ``n x c`` matrix whose rows are simplex points.

    >>> AssignmentState([[0.2, 0.8], [0.5, 0.5]]).dims
    (2, 2)
    """
    values: np.ndarray

    def __post_init__(self):
        values = _validated_copy(self.values, 2, 'AssignmentState')
        _check_simplex_rows(values, 'AssignmentState')
        object.__setattr__(self, 'values', values)

    @property
    def dims(self) -> Tuple[int, int]:
        n, c = self.values.shape
        return n, c

    @property
    def rows(self) -> Tuple[SimplexPoint, ...]:
        return tuple(SimplexPoint(row) for row in self.values)


@dataclass(frozen=True, eq=False)
class AssignmentTangent(_ArrayValue):
    """An ``n x c`` matrix whose rows are tangent vectors."""
    values: np.ndarray

    def __post_init__(self):
        values = _validated_copy(self.values, 2, 'AssignmentTangent')
        _check_tangent_rows(values, 'AssignmentTangent')
        object.__setattr__(self, 'values', values)

    @property
    def dims(self) -> Tuple[int, int]:
        n, c = self.values.shape
        return n, c


def _same_shape(a: np.ndarray, b: np.ndarray, what: str):
    if a.shape != b.shape:
        raise DimensionMismatch(f'{what}: shapes {a.shape} and {b.shape} do not match')


def _matrix(x: ArrayLike, what: str) -> np.ndarray:
    array = np.asarray(x, dtype=float)
    if array.ndim != 2:
        raise DimensionMismatch(f'{what} needs an n x c matrix, got shape {array.shape}')
    return array


def project_tangent(x: ArrayLike) -> np.ndarray:
    """
    Orthogonal projection onto the tangent space, ``x - mean(x) * 1``.

    >>> project_tangent([1.0, 0.0])
    array([ 0.5, -0.5])
    """
    x = np.asarray(x, dtype=float)
    return x - x.mean(axis=-1, keepdims=True)


def replicator_apply(p: ArrayLike, x: ArrayLike) -> np.ndarray:
    """
    Applies the replicator operator ``Diag(p) - p p^T`` to `x`.

    >>> replicator_apply([0.5, 0.5], [1.0, 0.0])
    array([ 0.25, -0.25])
    """
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    _same_shape(p, x, 'replicator_apply')
    return p * x - p * np.sum(p * x, axis=-1, keepdims=True)


def fisher_rao_gradient(p: ArrayLike, g: ArrayLike) -> np.ndarray:
    """Fisher-Rao gradient at `p` of a function with Euclidean gradient `g`."""
    return replicator_apply(p, g)


def lift(p: ArrayLike, v: ArrayLike) -> np.ndarray:
    """
    The lifting map ``p * exp(v) / <p, exp(v)>``.

    Shifting `v` by a constant does not change the result, so the maximum is subtracted before exponentiation.

    >>> lift([0.5, 0.5], [np.log(2), 0.0])
    array([0.66666667, 0.33333333])
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    _same_shape(p, v, 'lift')
    weighted = p * np.exp(v - v.max(axis=-1, keepdims=True))
    return weighted / weighted.sum(axis=-1, keepdims=True)


def lift_inverse(p: ArrayLike, q: ArrayLike) -> np.ndarray:
    """The tangent vector ``v`` with ``lift(p, v) == q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    _same_shape(p, q, 'lift_inverse')
    return project_tangent(np.log(q) - np.log(p))


def fisher_rao_inner(p: ArrayLike, u: ArrayLike, v: ArrayLike) -> float:
    """
    Fisher-Rao inner product ``<u / p, v>``. For ``n x c`` arguments this is the product metric of the assignment
    manifold.
    """
    p = np.asarray(p, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    _same_shape(p, u, 'fisher_rao_inner')
    _same_shape(p, v, 'fisher_rao_inner')
    return float(np.sum(u / p * v))


def chart_e(p: ArrayLike) -> np.ndarray:
    """e-coordinates: the unconstrained exponential-family parameters of `p`."""
    log_p = np.log(np.asarray(p, dtype=float))
    return (log_p - log_p.mean(axis=-1, keepdims=True))[..., :-1]


def chart_e_inv(theta: ArrayLike) -> np.ndarray:
    """
    Inverse of :func:`chart_e`.

    >>> chart_e_inv([0.0, 0.0])
    array([0.33333333, 0.33333333, 0.33333333])
    """
    theta = np.asarray(theta, dtype=float)
    exponent = np.concatenate([theta, -theta.sum(axis=-1, keepdims=True)], axis=-1)
    return softmax(exponent, axis=-1)


def chart_m(p: ArrayLike) -> np.ndarray:
    """m-coordinates: all entries but the last."""
    return np.array(p, dtype=float)[..., :-1]


def chart_m_inv(mu: ArrayLike) -> np.ndarray:
    """
    Inverse of :func:`chart_m`.

    :raises InvalidState: If `mu` is not positive or its entries sum to one or more.
    """
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise InvalidState(f'm-coordinates must be positive, got {mu}')
    rest = 1 - mu.sum(axis=-1, keepdims=True)
    if np.any(rest <= 0):
        raise InvalidState(f'm-coordinates must sum to less than one, got {mu}')
    return np.concatenate([mu, rest], axis=-1)


def project_tangent_W(X: ArrayLike) -> np.ndarray:
    return project_tangent(_matrix(X, 'project_tangent_W'))


def replicator_apply_W(S: ArrayLike, X: ArrayLike) -> np.ndarray:
    return replicator_apply(_matrix(S, 'replicator_apply_W'), _matrix(X, 'replicator_apply_W'))


def lift_W(S: ArrayLike, V: ArrayLike) -> np.ndarray:
    return lift(_matrix(S, 'lift_W'), _matrix(V, 'lift_W'))


def barycenter(c: int) -> np.ndarray:
    return np.full(c, 1.0 / c)


def barycenter_W(n: int, c: int) -> np.ndarray:
    return np.full((n, c), 1.0 / c)


def clamp_renormalize(X: ArrayLike, eps: float = BOUNDARY_EPS) -> Tuple[np.ndarray, float]:
    """
    Clamps entries to at least `eps` and renormalizes every row.

    Returns the renormalized state and the largest deviation of a row sum from one before renormalization.
    """
    clamped = np.maximum(np.asarray(X, dtype=float), eps)
    sums = clamped.sum(axis=-1, keepdims=True)
    drift = float(np.max(np.abs(sums - 1)))
    return clamped / sums, drift


def random_assignment(rng: np.random.Generator, n: int, c: int, concentration: float = 1.0) -> np.ndarray:
    """Draws an interior ``n x c`` state with Dirichlet distributed rows."""
    W = rng.dirichlet(np.full(c, concentration), size=n)
    return clamp_renormalize(W, eps=1e-12)[0]


def random_near_vertex(rng: np.random.Generator, n: int, c: int, weight: float = 0.9,
                       labels: Optional[ArrayLike] = None) -> np.ndarray:
    """Draws an interior state whose row ``i`` puts mass of at least `weight` on ``labels[i]`` (random if omitted)."""
    if labels is None:
        labels = rng.integers(c, size=n)
    labels = np.asarray(labels)
    W = (1 - weight) * random_assignment(rng, n, c)
    W[np.arange(n), labels] += weight
    return W


def random_tangent(rng: np.random.Generator, shape: Tuple[int, ...], scale: float = 1.0) -> np.ndarray:
    return project_tangent(rng.uniform(-scale, scale, size=shape))
