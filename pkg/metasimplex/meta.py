"""
The meta-simplex of joint distributions over all ``N = c**n`` label assignments.

Entries of meta-simplex vectors are indexed by multi-indices ``gamma`` with one label per node. Labels are
0-based, and the flat index orders multi-indices row-major with the first node most significant, so for ``n = 2``
the embedding :func:`embed_T` coincides with the row-major flattening of the outer product of both rows.

The maps of this module are

* :func:`embed_T` -- assignment states to product distributions, ``T(W)_gamma = prod_i W[i, gamma_i]``,
* :func:`lift_Q` -- node-wise quantities to sums along multi-indices, ``Q(X)_gamma = sum_i X[i, gamma_i]``,
* :func:`marginalize_M` -- joint distributions to node-wise marginals, the adjoint of :func:`lift_Q`.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from dataclasses_json import dataclass_json
from numpy.typing import ArrayLike
from scipy.linalg import null_space

from metasimplex.errors import ConfigError, DimensionMismatch, InvalidState, SizeCapExceeded
from metasimplex.simplex import SUM_TOL, _ArrayValue, _check_simplex_rows, _check_tangent_rows, _validated_copy

__all__ = [
    'DEFAULT_SIZE_CAP', 'SUPPORT_THRESHOLD', 'RANK_RTOL',
    'MultiIndex', 'MetaState', 'MetaTangent', 'MaxEntropyReport',
    'check_size', 'multi_indices', 'mindex_encode', 'mindex_decode',
    'embed_T', 'marginalize_M', 'lift_Q', 'q_matrix', 'm_matrix', 'q_rank', 'q_kernel', 'm_kernel',
    'differential_T', 'entropy', 'kl', 'cross_entropy', 'max_entropy_check',
    'rank1_projection', 'is_on_wright_manifold', 'support', 'embedded_support_matches', 'vertex_image',
    'in_tangent_image',
]

#: Largest meta-simplex dimension ``N`` handled without an explicit override.
DEFAULT_SIZE_CAP = 2 ** 20

#: Entries above this value count as support.
SUPPORT_THRESHOLD = 1e-9

#: Singular values below ``RANK_RTOL * sigma_max`` count as zero.
RANK_RTOL = 1e-10


def check_size(n: int, c: int, cap: Optional[int] = None) -> int:
    """
    Returns ``N = c**n``.

    :raises SizeCapExceeded: If ``N`` is larger than `cap` (:data:`DEFAULT_SIZE_CAP` if omitted).
    """
    cap = DEFAULT_SIZE_CAP if cap is None else cap
    size = c ** n
    if size > cap:
        raise SizeCapExceeded(n, c, cap)
    return size


@dataclass(frozen=True)
class MultiIndex:
    """
    One label per node.

    >>> MultiIndex((1, 0, 2), c=3).encode()
    11
    >>> MultiIndex.decode(11, n=3, c=3)
    MultiIndex(labels=(1, 0, 2), c=3)
    """
    labels: Tuple[int, ...]
    c: int

    def __post_init__(self):
        labels = tuple(int(label) for label in self.labels)
        if any(label < 0 or label >= self.c for label in labels):
            raise InvalidState(f'Multi-index {labels} has labels outside of range(0, {self.c})')
        object.__setattr__(self, 'labels', labels)

    @property
    def n(self) -> int:
        return len(self.labels)

    def encode(self) -> int:
        flat = 0
        for label in self.labels:
            flat = flat * self.c + label
        return flat

    @classmethod
    def decode(cls, flat: int, n: int, c: int) -> 'MultiIndex':
        if flat < 0 or flat >= c ** n:
            raise InvalidState(f'Flat index {flat} outside of range(0, {c ** n})')
        labels = []
        for _ in range(n):
            flat, label = divmod(flat, c)
            labels.append(label)
        return cls(tuple(reversed(labels)), c)


def mindex_encode(labels: Sequence[int], c: int) -> int:
    return MultiIndex(tuple(labels), c).encode()


def mindex_decode(flat: int, n: int, c: int) -> Tuple[int, ...]:
    return MultiIndex.decode(flat, n, c).labels


def multi_indices(n: int, c: int, cap: Optional[int] = None) -> np.ndarray:
    """All multi-indices as an ``N x n`` integer array in flat order."""
    size = check_size(n, c, cap)
    return np.stack(np.unravel_index(np.arange(size), (c,) * n), axis=1)


def _meta_dims(x: np.ndarray, n: int, c: int, what: str):
    if x.shape != (c ** n,):
        raise DimensionMismatch(f'{what} needs a vector of length {c}**{n} = {c ** n}, got shape {x.shape}')


@dataclass(frozen=True, eq=False)
class MetaState(_ArrayValue):
    """A strictly positive joint distribution on ``c**n`` multi-indices."""
    values: np.ndarray
    n: int
    c: int

    def __post_init__(self):
        values = _validated_copy(self.values, 1, 'MetaState')
        _meta_dims(values, self.n, self.c, 'MetaState')
        _check_simplex_rows(values, 'MetaState')
        object.__setattr__(self, 'values', values)


@dataclass(frozen=True, eq=False)
class MetaTangent(_ArrayValue):
    values: np.ndarray
    n: int
    c: int

    def __post_init__(self):
        values = _validated_copy(self.values, 1, 'MetaTangent')
        _meta_dims(values, self.n, self.c, 'MetaTangent')
        _check_tangent_rows(values, 'MetaTangent')
        object.__setattr__(self, 'values', values)


def embed_T(W: ArrayLike, cap: Optional[int] = None) -> np.ndarray:
    """
    Embeds an assignment state as the product distribution of its rows.

    >>> embed_T([[0.2, 0.8], [0.3, 0.7]])
    array([0.06, 0.14, 0.24, 0.56])
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise DimensionMismatch(f'embed_T needs an n x c matrix, got shape {W.shape}')
    n, c = W.shape
    check_size(n, c, cap)
    p = W[0]
    for row in W[1:]:
        p = np.outer(p, row).ravel()
    return p


def lift_Q(X: ArrayLike, cap: Optional[int] = None) -> np.ndarray:
    """
    Sums node-wise entries along every multi-index.

    >>> lift_Q([[1.0, 2.0], [3.0, 4.0]])
    array([4., 5., 5., 6.])
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f'lift_Q needs an n x c matrix, got shape {X.shape}')
    n, c = X.shape
    check_size(n, c, cap)
    q = X[0]
    for row in X[1:]:
        q = np.add.outer(q, row).ravel()
    return q


def marginalize_M(x: ArrayLike, n: int, c: int) -> np.ndarray:
    """
    Node-wise marginals of a vector on the meta-simplex, as an ``n x c`` matrix.

    >>> marginalize_M([0.06, 0.14, 0.24, 0.56], n=2, c=2)
    array([[0.2, 0.8],
           [0.3, 0.7]])
    """
    x = np.asarray(x, dtype=float)
    _meta_dims(x, n, c, 'marginalize_M')
    tensor = x.reshape((c,) * n)
    axes = tuple(range(n))
    return np.stack([tensor.sum(axis=axes[:i] + axes[i + 1:]) for i in range(n)])


def q_matrix(n: int, c: int, cap: Optional[int] = None) -> np.ndarray:
    """The matrix of :func:`lift_Q` acting on row-major vectorized ``n x c`` matrices, shape ``N x nc``."""
    indices = multi_indices(n, c, cap)
    Q = np.zeros((len(indices), n * c))
    rows = np.arange(len(indices))
    for i in range(n):
        Q[rows, i * c + indices[:, i]] = 1.0
    return Q


def m_matrix(n: int, c: int, cap: Optional[int] = None) -> np.ndarray:
    """The matrix of :func:`marginalize_M`, which is the transpose of :func:`q_matrix`."""
    return q_matrix(n, c, cap).T


def q_rank(n: int, c: int, cap: Optional[int] = None) -> int:
    """
    Numerical rank of :func:`q_matrix`.

    >>> q_rank(3, 3)
    7
    """
    singular_values = np.linalg.svd(q_matrix(n, c, cap), compute_uv=False)
    return int(np.sum(singular_values > RANK_RTOL * singular_values[0]))


def q_kernel(n: int, c: int, cap: Optional[int] = None) -> np.ndarray:
    """Orthonormal kernel basis of :func:`q_matrix`, one ``n x c`` matrix per basis vector."""
    basis = null_space(q_matrix(n, c, cap), rcond=RANK_RTOL)
    return basis.T.reshape(-1, n, c)


def m_kernel(n: int, c: int, cap: Optional[int] = None) -> np.ndarray:
    """Orthonormal kernel basis of :func:`m_matrix` as the columns of an ``N x k`` matrix."""
    return null_space(m_matrix(n, c, cap), rcond=RANK_RTOL)


def differential_T(W: ArrayLike, V: ArrayLike, cap: Optional[int] = None) -> np.ndarray:
    """Closed form of the differential of :func:`embed_T` at `W` in direction `V`, ``T(W) * Q(V / W)``."""
    W = np.asarray(W, dtype=float)
    V = np.asarray(V, dtype=float)
    if W.shape != V.shape:
        raise DimensionMismatch(f'differential_T: shapes {W.shape} and {V.shape} do not match')
    return embed_T(W, cap) * lift_Q(V / W, cap)


def entropy(p: ArrayLike) -> float:
    p = np.asarray(p, dtype=float)
    return float(-np.sum(p * np.log(p)))


def cross_entropy(p: ArrayLike, q: ArrayLike) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(-np.sum(p * np.log(q)))


def kl(p: ArrayLike, q: ArrayLike) -> float:
    """Relative entropy of `p` with respect to the strictly positive `q`."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(np.sum(p * (np.log(p) - np.log(q))))


@dataclass_json
@dataclass(frozen=True)
class MaxEntropyReport:
    """
    Outcome of :func:`max_entropy_check`.

    `smallest_gap` is the smallest observed ``H(T(W)) - H(T(W) + u)``, `identity_error` the largest deviation of
    ``H(p) = H(T(W)) - KL(p, T(W))`` over all perturbed states.
    """
    trials: int
    entropy: float
    smallest_gap: float
    largest_gap: float
    identity_error: float
    passed: bool


def max_entropy_check(W: ArrayLike, trials: int = 1000, *, rng: Optional[np.random.Generator] = None,
                      margin: float = 1e-9, cap: Optional[int] = None) -> MaxEntropyReport:
    """
    Samples `trials` perturbations of ``T(W)`` that keep all marginals fixed and compares entropies.

    Perturbation directions are random unit vectors in the kernel of :func:`m_matrix`. Each direction is scaled to a
    random fraction of the largest step that keeps every entry at least `margin`; the largest step is found by
    bisection.

    :raises ConfigError: If `trials` is smaller than 1.
    """
    if trials < 1:
        raise ConfigError(f'needs at least one trial, got {trials}', field='trials')
    rng = np.random.default_rng() if rng is None else rng
    W = np.asarray(W, dtype=float)
    n, c = W.shape
    p_star = embed_T(W, cap)
    h_star = entropy(p_star)
    kernel = m_kernel(n, c, cap)
    if kernel.shape[1] == 0:
        return MaxEntropyReport(trials=0, entropy=h_star, smallest_gap=0.0, largest_gap=0.0, identity_error=0.0,
                                passed=True)

    gaps = []
    identity_error = 0.0
    for _ in range(trials):
        u = kernel @ rng.standard_normal(kernel.shape[1])
        u /= np.linalg.norm(u)
        p = p_star + rng.uniform(0.05, 1.0) * _largest_step(p_star, u, margin) * u
        h = entropy(p)
        gaps.append(h_star - h)
        identity_error = max(identity_error, abs(h - (h_star - kl(p, p_star))))

    return MaxEntropyReport(
        trials=trials,
        entropy=h_star,
        smallest_gap=float(min(gaps)),
        largest_gap=float(max(gaps)),
        identity_error=float(identity_error),
        passed=bool(min(gaps) > 0),
    )


def _largest_step(p: np.ndarray, u: np.ndarray, margin: float, iterations: int = 60) -> float:
    low, high = 0.0, 1.0
    while np.min(p + high * u) >= margin:
        low, high = high, 2 * high
    for _ in range(iterations):
        middle = (low + high) / 2
        if np.min(p + middle * u) >= margin:
            low = middle
        else:
            high = middle
    return low


def rank1_projection(p: ArrayLike, n: int, c: int) -> np.ndarray:
    """The product distribution with the same marginals as `p`."""
    return embed_T(marginalize_M(p, n, c))


def is_on_wright_manifold(p: ArrayLike, n: int, c: int, tol: float = SUM_TOL) -> bool:
    """
    Whether `p` factorizes over nodes, i.e. equals the product of its own marginals.

    >>> is_on_wright_manifold([0.4, 0.1, 0.1, 0.4], n=2, c=2)
    False
    """
    p = np.asarray(p, dtype=float)
    return bool(np.max(np.abs(rank1_projection(p, n, c) - p)) <= tol)


def support(x: ArrayLike, threshold: float = SUPPORT_THRESHOLD) -> List[List[int]]:
    """Support of every row of `x` (of `x` itself for a vector), entries above `threshold`."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return [np.flatnonzero(row > threshold).tolist() for row in x]


def embedded_support_matches(W: ArrayLike, threshold: float = SUPPORT_THRESHOLD,
                             cap: Optional[int] = None) -> bool:
    """
    Whether the support of ``T(W)`` is exactly the set of multi-indices whose labels are all in the support of the
    corresponding rows of `W`. `W` may lie on the boundary.

    Entries of `W` at or below `threshold` count as zero on both sides, so the joint support is the product of the
    node-level support indicators.

    >>> embedded_support_matches([[1 - 1e-10, 1e-10], [0.5, 0.5]])
    True
    """
    W = np.asarray(W, dtype=float)
    n, c = W.shape
    node_support = W > threshold
    in_node_support = np.all(node_support[np.arange(n), multi_indices(n, c, cap)], axis=1)
    in_joint_support = embed_T(np.where(node_support, W, 0.0), cap) > 0
    return bool(np.array_equal(in_node_support, in_joint_support))


def vertex_image(labels: Sequence[int], c: int) -> np.ndarray:
    """
    ``T`` of the deterministic assignment given by `labels`: the unit vector at the multi-index `labels`.
    """
    index = MultiIndex(tuple(labels), c)
    p = np.zeros(c ** index.n)
    p[index.encode()] = 1.0
    return p


def in_tangent_image(U: ArrayLike, n: int, c: int, tol: float = 1e-10, cap: Optional[int] = None) -> bool:
    """Whether the meta-simplex tangent vector `U` is ``Q(V)`` for some node-wise `V`."""
    U = np.asarray(U, dtype=float)
    _meta_dims(U, n, c, 'in_tangent_image')
    Q = q_matrix(n, c, cap)
    coefficients, *_ = np.linalg.lstsq(Q, U, rcond=None)
    return bool(np.max(np.abs(Q @ coefficients - U)) <= tol)
