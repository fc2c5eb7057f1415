"""
Integration of replicator dynamics ``X' = R_X[F(X)]`` on the assignment manifold and on the meta-simplex.

Three fixed-step schemes are available through :class:`IntegratorConfig`:

``geometric-euler``
    ``X <- lift(X, h * F(X))``. Stays on the manifold by construction and commutes exactly with the embedding
    into the meta-simplex.
``rk4-tangent``
    Classical Runge-Kutta on the tangent parameterization ``V' = P0 F(softmax(V))`` with ``V(0) = P0 log X(0)``;
    states are reconstructed as ``softmax(V)``.
``rk4-ambient-reference``
    Classical Runge-Kutta on the replicator equation in the ambient space.

After every step the state is clamped to at least ``boundary_eps`` and renormalized. The accumulated
renormalization drift is logged and the run fails once it exceeds ``drift_limit``.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from dataclasses_json import dataclass_json
from numpy.typing import ArrayLike
from scipy.special import softmax
from typing_extensions import Literal

from metasimplex.errors import ConfigError, DimensionMismatch, NotOnWrightManifold, NumericalFailure
from metasimplex.meta import MetaState, MetaTangent, embed_T, is_on_wright_manifold, marginalize_M
from metasimplex.payoff import (EmbeddedPayoff, GameMatrix, PayoffModel, embedded_potential_value, eval_payoff,
                                potential_value)
from metasimplex.simplex import (BOUNDARY_EPS, AssignmentState, AssignmentTangent, clamp_renormalize, lift,
                                 project_tangent, replicator_apply)

__all__ = [
    'Scheme', 'SCHEMES', 'IntegratorConfig', 'Trajectory',
    'rk4_step', 'integrate_multipop', 'integrate_metasimplex', 'integrate_tangent', 'integrate_tangent_meta',
    'decompose_multigame', 'recombine',
]

logger = logging.getLogger(__name__)

Scheme = Literal['geometric-euler', 'rk4-tangent', 'rk4-ambient-reference']
SCHEMES = ('geometric-euler', 'rk4-tangent', 'rk4-ambient-reference')

Presentation = Literal['multipop', 'meta']

Field = Callable[[np.ndarray], np.ndarray]


@dataclass_json
@dataclass(frozen=True)
class IntegratorConfig:
    """
    Fixed-step integration settings.

    >>> IntegratorConfig(h=0.25, t_end=1.0).time_grid()
    array([0.  , 0.25, 0.5 , 0.75, 1.  ])
    """
    scheme: str = 'geometric-euler'
    h: float = 1e-2
    t_end: float = 1.0
    stride: int = 1
    boundary_eps: float = BOUNDARY_EPS
    drift_limit: float = 1e-6

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f'Unknown integration scheme "{self.scheme}", expected one of {", ".join(SCHEMES)}',
                              field='integrator.scheme')
        if not self.h > 0:
            raise ConfigError(f'Step size must be positive, got {self.h}', field='integrator.h')
        if not self.t_end >= 0:
            raise ConfigError(f'Horizon must not be negative, got {self.t_end}', field='integrator.t_end')
        if self.stride < 1:
            raise ConfigError(f'Record stride must be at least 1, got {self.stride}', field='integrator.stride')

    @property
    def steps(self) -> int:
        return max(0, math.ceil(self.t_end / self.h - 1e-9))

    def time_grid(self) -> np.ndarray:
        """Times of all steps. The last step is shortened so that the grid ends at ``t_end``."""
        return np.minimum(np.arange(self.steps + 1) * self.h, self.t_end)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Recorded samples of an integration.

    `states` has shape ``(samples, rows, cols)``: ``(samples, n, c)`` for multi-population runs and
    ``(samples, 1, c**n)`` for meta-simplex runs. Per sample, `mean_payoff` holds ``<X, F(X)>``, `row_entropy` and
    `row_max` hold the entropy and the largest entry of every row.
    """
    times: np.ndarray
    states: np.ndarray
    mean_payoff: np.ndarray
    row_entropy: np.ndarray
    row_max: np.ndarray
    presentation: Presentation
    n: int
    c: int
    tangents: Optional[np.ndarray] = None
    potential: Optional[np.ndarray] = None
    drift: float = 0.0

    def __len__(self):
        return len(self.times)

    @property
    def dims(self):
        return self.n, self.c

    @property
    def points(self) -> np.ndarray:
        """States as ``(samples, n, c)`` matrices, or ``(samples, c**n)`` vectors for meta-simplex runs."""
        return self.states[:, 0, :] if self.presentation == 'meta' else self.states

    @property
    def final(self) -> np.ndarray:
        return self.points[-1]

    @property
    def min_row_entropy(self) -> np.ndarray:
        return self.row_entropy.min(axis=1)

    @property
    def max_row_entry(self) -> np.ndarray:
        """Smallest row maximum per sample; equals one exactly at extremal states."""
        return self.row_max.min(axis=1)


def rk4_step(f: Field, y: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of the autonomous system ``y' = f(y)``."""
    k1 = f(y)
    k2 = f(y + h / 2 * k1)
    k3 = f(y + h / 2 * k2)
    k4 = f(y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


class _Recorder:
    def __init__(self, payoff: Field, potential: Optional[Callable[[np.ndarray], float]], stride: int, steps: int):
        self.payoff = payoff
        self.potential = potential
        self.stride = stride
        self.steps = steps
        self.times: List[float] = []
        self.states: List[np.ndarray] = []
        self.tangents: List[np.ndarray] = []
        self.mean_payoff: List[float] = []
        self.row_entropy: List[np.ndarray] = []
        self.row_max: List[np.ndarray] = []
        self.potential_values: List[float] = []

    def offer(self, step: int, t: float, X: np.ndarray, V: Optional[np.ndarray] = None):
        if step % self.stride and step != self.steps:
            return
        self.times.append(t)
        self.states.append(X.copy())
        if V is not None:
            self.tangents.append(V.copy())
        self.mean_payoff.append(float(np.sum(X * self.payoff(X))))
        self.row_entropy.append(-np.sum(X * np.log(X), axis=1))
        self.row_max.append(X.max(axis=1))
        if self.potential is not None:
            self.potential_values.append(self.potential(X))

    def trajectory(self, presentation: Presentation, n: int, c: int, drift: float) -> Trajectory:
        return Trajectory(
            times=np.array(self.times),
            states=np.array(self.states),
            mean_payoff=np.array(self.mean_payoff),
            row_entropy=np.array(self.row_entropy),
            row_max=np.array(self.row_max),
            presentation=presentation,
            n=n,
            c=c,
            tangents=np.array(self.tangents) if self.tangents else None,
            potential=np.array(self.potential_values) if self.potential is not None else None,
            drift=drift,
        )


class _DriftMonitor:
    def __init__(self, cfg: IntegratorConfig):
        self.cfg = cfg
        self.total = 0.0

    def accept(self, X: np.ndarray, t: float) -> np.ndarray:
        if not np.all(np.isfinite(X)):
            raise NumericalFailure(f'Step rejected at t={t:g}: state has non-finite entries')
        clamped = int(np.sum(X < self.cfg.boundary_eps))
        X, drift = clamp_renormalize(X, self.cfg.boundary_eps)
        self.total += drift
        if clamped:
            logger.debug('Clamped %d entries to the boundary at t=%g', clamped, t)
        if self.total > self.cfg.drift_limit:
            raise NumericalFailure(f'Renormalization drift {self.total:.3g} exceeds the limit '
                                   f'{self.cfg.drift_limit:g} at t={t:g}')
        return X


def _integrate(payoff: Field, X0: np.ndarray, cfg: IntegratorConfig, *, presentation: Presentation, n: int, c: int,
               potential: Optional[Callable[[np.ndarray], float]] = None,
               V0: Optional[np.ndarray] = None) -> Trajectory:
    times = cfg.time_grid()
    steps = len(times) - 1
    recorder = _Recorder(payoff, potential, cfg.stride, steps)
    monitor = _DriftMonitor(cfg)
    logger.info('Integrating %s dynamics with %s, %d steps of h=%g', presentation, cfg.scheme, steps, cfg.h)

    if cfg.scheme == 'rk4-tangent' or V0 is not None:
        V = project_tangent(np.log(X0)) if V0 is None else np.array(V0, dtype=float)

        def tangent_field(V):
            return project_tangent(payoff(softmax(V, axis=-1)))

        X = softmax(V, axis=-1) if V0 is not None else X0
        recorder.offer(0, times[0], X, V)
        for k in range(1, steps + 1):
            V = rk4_step(tangent_field, V, times[k] - times[k - 1])
            if not np.all(np.isfinite(V)):
                raise NumericalFailure(f'Step rejected at t={times[k]:g}: tangent state has non-finite entries')
            X = monitor.accept(softmax(V, axis=-1), times[k])
            recorder.offer(k, times[k], X, V)
    else:
        def ambient_field(X):
            return replicator_apply(X, payoff(X))

        X = X0
        recorder.offer(0, times[0], X)
        for k in range(1, steps + 1):
            h = times[k] - times[k - 1]
            if cfg.scheme == 'geometric-euler':
                X = lift(X, h * payoff(X))
            else:
                X = rk4_step(ambient_field, X, h)
            X = monitor.accept(X, times[k])
            recorder.offer(k, times[k], X)

    logger.info('Integration finished at t=%g, accumulated drift %.3g', times[-1], monitor.total)
    return recorder.trajectory(presentation, n, c, monitor.total)


def _multipop_potential(model: PayoffModel):
    if model.kind != 'potential':
        return None
    return lambda X: potential_value(model, X)


def integrate_multipop(model: PayoffModel, W0: ArrayLike, cfg: IntegratorConfig = IntegratorConfig()) -> Trajectory:
    """
    Integrates ``W' = R_W[F(W)]`` from the interior state `W0`.

    :raises InvalidState: If `W0` is not an interior assignment state.
    :raises NumericalFailure: If the payoff or the state becomes non-finite or the drift limit is exceeded.
    """
    W0 = np.array(AssignmentState(W0))
    if W0.shape != model.dims:
        raise DimensionMismatch(f'Initial state has shape {W0.shape}, the payoff expects {model.dims}')
    return _integrate(lambda X: eval_payoff(model, X), W0, cfg, presentation='multipop', n=model.n, c=model.c,
                      potential=_multipop_potential(model))


def _meta_payoff(embedded: EmbeddedPayoff, use_matrix: bool) -> Field:
    if use_matrix:
        return lambda X: embedded.via_matrix(X[0])[None, :]
    return lambda X: embedded(X[0])[None, :]


def _meta_potential(embedded: EmbeddedPayoff):
    if embedded.model.kind != 'potential':
        return None
    return lambda X: embedded_potential_value(embedded.model, X[0])


def integrate_metasimplex(embedded: EmbeddedPayoff, p0: ArrayLike, cfg: IntegratorConfig = IntegratorConfig(), *,
                          use_matrix: bool = False) -> Trajectory:
    """
    Integrates ``p' = R_p[F(p)]`` on the meta-simplex for the embedded payoff.

    With `use_matrix` the explicit payoff matrix of a linear kind is used instead of ``Q o F o M``.
    """
    p0 = np.array(MetaState(p0, embedded.n, embedded.c))
    return _integrate(_meta_payoff(embedded, use_matrix), p0[None, :], cfg, presentation='meta', n=embedded.n,
                      c=embedded.c, potential=_meta_potential(embedded))


def integrate_tangent(model: PayoffModel, V0: ArrayLike, cfg: IntegratorConfig = IntegratorConfig()) -> Trajectory:
    """
    Integrates the tangent parameterization ``V' = P0 F(softmax(V))`` with RK4, regardless of ``cfg.scheme``.

    ``V0 = 0`` starts at the barycenter; ``V0 = P0 log W0`` reproduces :func:`integrate_multipop` from `W0`.
    """
    V0 = np.array(AssignmentTangent(V0))
    if V0.shape != model.dims:
        raise DimensionMismatch(f'Initial tangent has shape {V0.shape}, the payoff expects {model.dims}')
    X0 = softmax(V0, axis=-1)
    return _integrate(lambda X: eval_payoff(model, X), X0, cfg, presentation='multipop', n=model.n, c=model.c,
                      potential=_multipop_potential(model), V0=V0)


def integrate_tangent_meta(embedded: EmbeddedPayoff, U0: ArrayLike, cfg: IntegratorConfig = IntegratorConfig(), *,
                           use_matrix: bool = False) -> Trajectory:
    """Meta-simplex variant of :func:`integrate_tangent`, ``U' = P0 F(softmax(U))``."""
    U0 = np.array(MetaTangent(U0, embedded.n, embedded.c))
    X0 = softmax(U0, axis=-1)[None, :]
    return _integrate(_meta_payoff(embedded, use_matrix), X0, cfg, presentation='meta', n=embedded.n, c=embedded.c,
                      potential=_meta_potential(embedded), V0=U0[None, :])


def decompose_multigame(games: Sequence[ArrayLike], p0: ArrayLike, cfg: IntegratorConfig = IntegratorConfig(),
                        tol: float = 1e-10) -> List[Trajectory]:
    """
    Integrates every game of a multi-game separately from the marginals of `p0`.

    Started on the Wright manifold, the joint multi-game dynamics stays on it and equals :func:`recombine` of the
    returned single-game trajectories.

    :raises NotOnWrightManifold: If `p0` does not factorize over the games within `tol`.
    """
    games = [game if isinstance(game, GameMatrix) else GameMatrix(game) for game in games]
    n, c = len(games), games[0].c
    if not is_on_wright_manifold(p0, n, c, tol):
        raise NotOnWrightManifold('Multi-game decomposition needs an initial state that factorizes over the games')
    marginals = marginalize_M(p0, n, c)
    return [integrate_multipop(PayoffModel.multigame([game]), marginal[None, :], cfg)
            for game, marginal in zip(games, marginals)]


def recombine(trajectories: Sequence[Trajectory], cap: Optional[int] = None) -> np.ndarray:
    """Joint states ``T(W_1(t), ..., W_n(t))`` of single-population trajectories, shape ``(samples, c**n)``."""
    times = trajectories[0].times
    if any(len(trajectory) != len(times) or not np.allclose(trajectory.times, times) for trajectory in trajectories):
        raise DimensionMismatch('Trajectories to recombine must be sampled at the same times')
    rows = np.concatenate([trajectory.states for trajectory in trajectories], axis=1)
    return np.stack([embed_T(sample, cap) for sample in rows])
