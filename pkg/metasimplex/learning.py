"""
Gradients of losses of the final state of parameterized ODEs by the adjoint method, and learning of the game matrix
``B`` of evolutionary games on networks from labelled data.

For ``v' = f(v, params, t)`` on ``[0, T]`` and a loss ``L(v(T))`` the gradient is

    ``dL/dparams = integral over [0, T] of d_params f(v(t), params, t)^T lambda(t) dt``

with the costate ``lambda' = -d_v f(v(t), params, t)^T lambda``, ``lambda(T) = grad L(v(T))``. The forward pass keeps
only checkpoints at uniform quadrature nodes. The backward pass recomputes the forward states of one segment at a time
from its checkpoint, integrates the costate with RK4 (intermediate states from cubic Hermite interpolation) and
accumulates the integral by the trapezoidal rule on the step grid.
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, List, Optional

import numpy as np
from dataclasses_json import dataclass_json
from numpy.typing import ArrayLike
from scipy.special import log_softmax, softmax

from metasimplex.dynamics import IntegratorConfig
from metasimplex.errors import CheckpointBudgetExceeded, ConfigError, DimensionMismatch, NumericalFailure
from metasimplex.payoff import GraphWeights
from metasimplex.simplex import project_tangent, replicator_apply

__all__ = [
    'QUADRATURE_NODES', 'CHECKPOINT_BUDGET',
    'LearnProblem', 'AdjointState', 'LearnConfig', 'LearnResult', 'LabelingDataset',
    'solve_forward', 'solve_adjoint', 'adjoint_gradient', 'finite_diff_gradient',
    'cross_entropy_loss', 'cross_entropy_gradient', 'egn_tangent_problem', 'labeling_dataset', 'learn_egn',
]

logger = logging.getLogger(__name__)

#: Number of checkpoint intervals of the forward pass.
QUADRATURE_NODES = 256

#: Largest number of checkpoints kept in memory.
CHECKPOINT_BUDGET = 100_000

VectorField = Callable[[np.ndarray, np.ndarray, float], np.ndarray]
VectorJacobianProduct = Callable[[np.ndarray, np.ndarray, float, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class LearnProblem:
    """
    A parameter learning problem for a fixed time horizon.

    `vjp_state` and `vjp_params` return ``d_v f^T lambda`` and ``d_params f^T lambda``; if omitted, they are
    approximated with central differences of step `fd_step`.
    """
    field: VectorField
    v0: np.ndarray
    params: np.ndarray
    horizon: float
    loss: Callable[[np.ndarray], float]
    loss_gradient: Callable[[np.ndarray], np.ndarray]
    vjp_state: Optional[VectorJacobianProduct] = None
    vjp_params: Optional[VectorJacobianProduct] = None
    fd_step: float = 1e-6

    def __post_init__(self):
        if not self.horizon > 0:
            raise ConfigError(f'Horizon must be positive, got {self.horizon}', field='horizon')
        object.__setattr__(self, 'v0', np.array(self.v0, dtype=float))
        object.__setattr__(self, 'params', np.array(self.params, dtype=float))

    def with_params(self, params: ArrayLike) -> 'LearnProblem':
        params = np.array(params, dtype=float)
        if params.shape != self.params.shape:
            raise DimensionMismatch(f'Parameters have shape {params.shape}, expected {self.params.shape}')
        return replace(self, params=params)

    def state_vjp(self, v: np.ndarray, t: float, costate: np.ndarray) -> np.ndarray:
        if self.vjp_state is not None:
            return self.vjp_state(v, self.params, t, costate)
        return _fd_vjp(lambda x: self.field(x, self.params, t), v, costate, self.fd_step)

    def params_vjp(self, v: np.ndarray, t: float, costate: np.ndarray) -> np.ndarray:
        if self.vjp_params is not None:
            return self.vjp_params(v, self.params, t, costate)
        return _fd_vjp(lambda p: self.field(v, p, t), self.params, costate, self.fd_step)


def _fd_vjp(func: Callable[[np.ndarray], np.ndarray], x: np.ndarray, costate: np.ndarray, step: float) -> np.ndarray:
    result = np.empty(x.size)
    for k in range(x.size):
        offset = np.zeros(x.size)
        offset[k] = step
        offset = offset.reshape(x.shape)
        result[k] = np.sum(costate * (func(x + offset) - func(x - offset))) / (2 * step)
    return result.reshape(x.shape)


@dataclass(frozen=True, eq=False)
class AdjointState:
    """Costate at ``t = 0``, accumulated parameter gradient, and the forward solution the backward pass belongs to."""
    costate: np.ndarray
    gradient: np.ndarray
    loss: float
    final_state: np.ndarray
    checkpoints: int


def _step_grid(problem: LearnProblem, cfg: IntegratorConfig) -> np.ndarray:
    return IntegratorConfig(scheme='rk4-tangent', h=cfg.h, t_end=problem.horizon).time_grid()


def _check_finite(x: np.ndarray, what: str, t: float):
    if not np.all(np.isfinite(x)):
        raise NumericalFailure(f'{what} has non-finite entries at t={t:g}')


def solve_forward(problem: LearnProblem, cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """Final state ``v(T)`` of the classical RK4 solution with step ``cfg.h``."""
    times = _step_grid(problem, cfg)
    v = problem.v0
    for k in range(1, len(times)):
        v = _rk4_step(problem, v, times[k - 1], times[k] - times[k - 1])
        _check_finite(v, 'State', times[k])
    return v


def _rk4_step(problem: LearnProblem, v: np.ndarray, t0: float, h: float) -> np.ndarray:
    k1 = problem.field(v, problem.params, t0)
    k2 = problem.field(v + h / 2 * k1, problem.params, t0 + h / 2)
    k3 = problem.field(v + h / 2 * k2, problem.params, t0 + h / 2)
    k4 = problem.field(v + h * k3, problem.params, t0 + h)
    return v + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def solve_adjoint(problem: LearnProblem, cfg: IntegratorConfig = IntegratorConfig(),
                  nodes: int = QUADRATURE_NODES, checkpoint_budget: int = CHECKPOINT_BUDGET) -> AdjointState:
    """
    Runs the forward pass with checkpoints and the backward costate pass.

    :raises CheckpointBudgetExceeded: If more than `checkpoint_budget` checkpoints would be kept.
    :raises NumericalFailure: If the state or the costate becomes non-finite.
    """
    times = _step_grid(problem, cfg)
    steps = len(times) - 1
    node_steps = np.unique(np.round(np.linspace(0, steps, nodes + 1)).astype(int))
    if len(node_steps) > checkpoint_budget:
        raise CheckpointBudgetExceeded(f'{len(node_steps)} checkpoints exceed the budget of {checkpoint_budget}')
    node_set = set(node_steps.tolist())

    # forward pass
    checkpoints = {0: problem.v0}
    v = problem.v0
    for k in range(1, steps + 1):
        v = _rk4_step(problem, v, times[k - 1], times[k] - times[k - 1])
        _check_finite(v, 'State', times[k])
        if k in node_set:
            checkpoints[k] = v
    logger.debug('Forward pass kept %d checkpoints for %d steps', len(checkpoints), steps)

    final_state = v
    loss = float(problem.loss(final_state))
    costate = np.asarray(problem.loss_gradient(final_state), dtype=float)
    gradient = np.zeros_like(problem.params)

    def costate_field(state, t, lam):
        return -problem.state_vjp(state, t, lam)

    # backward pass, segment by segment
    for first, last in zip(node_steps[-2::-1], node_steps[:0:-1]):
        states = [checkpoints[first]]
        for k in range(first + 1, last + 1):
            states.append(_rk4_step(problem, states[-1], times[k - 1], times[k] - times[k - 1]))
        velocities = [problem.field(state, problem.params, times[first + j]) for j, state in enumerate(states)]

        for j in range(last - first, 0, -1):
            t1, t0 = times[first + j], times[first + j - 1]
            h = t1 - t0
            v1, v0 = states[j], states[j - 1]
            f1, f0 = velocities[j], velocities[j - 1]
            middle = (v0 + v1) / 2 + h / 8 * (f0 - f1)
            integrand_end = problem.params_vjp(v1, t1, costate)

            k1 = costate_field(v1, t1, costate)
            k2 = costate_field(middle, t1 - h / 2, costate - h / 2 * k1)
            k3 = costate_field(middle, t1 - h / 2, costate - h / 2 * k2)
            k4 = costate_field(v0, t0, costate - h * k3)
            costate = costate - h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            _check_finite(costate, 'Costate', t0)

            gradient = gradient + h / 2 * (integrand_end + problem.params_vjp(v0, t0, costate))

    return AdjointState(costate=costate, gradient=gradient, loss=loss, final_state=final_state,
                        checkpoints=len(checkpoints))


def adjoint_gradient(problem: LearnProblem, cfg: IntegratorConfig = IntegratorConfig(),
                     nodes: int = QUADRATURE_NODES) -> np.ndarray:
    """
    Gradient of the loss with respect to the parameters by the adjoint method.

    >>> problem = LearnProblem(field=lambda v, p, t: p * v, v0=np.array([1.0]), params=np.array([0.5]), horizon=1.0,
    ...                        loss=lambda v: float(v[0]), loss_gradient=lambda v: np.ones(1),
    ...                        vjp_state=lambda v, p, t, lam: p * lam, vjp_params=lambda v, p, t, lam: v * lam)
    >>> bool(abs(adjoint_gradient(problem, IntegratorConfig(h=1e-3), nodes=16)[0] - np.exp(0.5)) < 1e-6)
    True
    """
    return solve_adjoint(problem, cfg, nodes).gradient


def finite_diff_gradient(problem: LearnProblem, cfg: IntegratorConfig = IntegratorConfig(),
                         step: float = 1e-5) -> np.ndarray:
    """Central differences of ``L(v(T))`` with respect to every parameter."""
    gradient = np.empty(problem.params.size)
    for k in range(problem.params.size):
        offset = np.zeros(problem.params.size)
        offset[k] = step
        offset = offset.reshape(problem.params.shape)
        upper = problem.loss(solve_forward(problem.with_params(problem.params + offset), cfg))
        lower = problem.loss(solve_forward(problem.with_params(problem.params - offset), cfg))
        gradient[k] = (upper - lower) / (2 * step)
    return gradient.reshape(problem.params.shape)


def cross_entropy_loss(target: ArrayLike, V: ArrayLike) -> float:
    """Cross-entropy ``-sum_i <target_i, log softmax(V_i)>`` of the assignment ``softmax(V)``."""
    return float(-np.sum(np.asarray(target) * log_softmax(np.asarray(V, dtype=float), axis=-1)))


def cross_entropy_gradient(target: ArrayLike, V: ArrayLike) -> np.ndarray:
    """Gradient of :func:`cross_entropy_loss` with respect to `V` for row-stochastic `target`."""
    return softmax(np.asarray(V, dtype=float), axis=-1) - np.asarray(target, dtype=float)


def egn_tangent_problem(omega: GraphWeights, b: ArrayLike, v0: ArrayLike, target: ArrayLike,
                        horizon: float) -> LearnProblem:
    """
    Learning problem for the game matrix ``B`` of the tangent parameterization ``V' = P0(omega softmax(V) B)``
    with cross-entropy loss against `target`.
    """
    omega_matrix = omega.omega
    target = np.array(target, dtype=float)
    v0 = project_tangent(np.array(v0, dtype=float))
    if v0.shape != target.shape or v0.shape[0] != omega.n:
        raise DimensionMismatch(f'Initial tangent {v0.shape}, target {target.shape} and graph of {omega.n} nodes '
                                f'do not match')

    def field(V, B, t):
        return project_tangent(omega_matrix @ softmax(V, axis=-1) @ B)

    def vjp_state(V, B, t, costate):
        return replicator_apply(softmax(V, axis=-1), omega_matrix.T @ project_tangent(costate) @ B.T)

    def vjp_params(V, B, t, costate):
        return softmax(V, axis=-1).T @ omega_matrix.T @ project_tangent(costate)

    return LearnProblem(
        field=field,
        v0=v0,
        params=np.array(b, dtype=float),
        horizon=horizon,
        loss=lambda V: cross_entropy_loss(target, V),
        loss_gradient=lambda V: cross_entropy_gradient(target, V),
        vjp_state=vjp_state,
        vjp_params=vjp_params,
    )


@dataclass_json
@dataclass(frozen=True)
class LearnConfig:
    """Settings of :func:`learn_egn`: gradient descent with momentum and gradient norm clipping."""
    iterations: int = 100
    learning_rate: float = 0.1
    momentum: float = 0.9
    clip_norm: float = 1.0
    patience: int = 10
    h: float = 0.05
    horizon: float = 15.0
    nodes: int = QUADRATURE_NODES

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError(f'Iterations must not be negative, got {self.iterations}', field='iterations')
        if not self.learning_rate > 0:
            raise ConfigError(f'Learning rate must be positive, got {self.learning_rate}', field='learning_rate')
        if not 0 <= self.momentum < 1:
            raise ConfigError(f'Momentum must be in [0, 1), got {self.momentum}', field='momentum')
        if not self.clip_norm > 0:
            raise ConfigError(f'Clip norm must be positive, got {self.clip_norm}', field='clip_norm')
        if self.patience < 1:
            raise ConfigError(f'Patience must be at least 1, got {self.patience}', field='patience')


@dataclass_json
@dataclass(frozen=True)
class LearnResult:
    """
    Outcome of :func:`learn_egn`. `b` is the best iterate, `assignment` the row-wise argmax of the final state under
    it, and `accuracy` the fraction of nodes where it matches the target's argmax.
    """
    b: List[List[float]]
    loss_history: List[float]
    initial_loss: float
    best_loss: float
    best_iteration: int
    assignment: List[int]
    accuracy: float
    aborted: bool = False

    @property
    def b_matrix(self) -> np.ndarray:
        return np.array(self.b)


@dataclass(frozen=True, eq=False)
class LabelingDataset:
    """A labelling problem on a pixel grid: ground truth, its one-hot target, a noisy initial assignment and the
    neighbourhood graph."""
    rows: int
    cols: int
    c: int
    truth: np.ndarray
    target: np.ndarray
    initial: np.ndarray
    omega: GraphWeights

    @property
    def v0(self) -> np.ndarray:
        return project_tangent(np.log(self.initial))


def labeling_dataset(rows: int = 8, cols: int = 8, c: int = 3, *, signal: float = 0.3, noise: float = 0.3,
                     seed: int = 0, radius: int = 1) -> LabelingDataset:
    """
    Vertical stripes of as equal width as possible, one per label, observed through a high-entropy initial assignment
    ``softmax(signal * onehot + noise * N(0, 1))``.
    """
    rng = np.random.default_rng(seed)
    stripe_of_column = np.empty(cols, dtype=int)
    for label, columns in enumerate(np.array_split(np.arange(cols), c)):
        stripe_of_column[columns] = label
    truth = np.tile(stripe_of_column, rows)
    target = np.eye(c)[truth]
    initial = softmax(signal * target + noise * rng.standard_normal(target.shape), axis=-1)
    return LabelingDataset(rows=rows, cols=cols, c=c, truth=truth, target=target, initial=initial,
                           omega=GraphWeights.grid_graph(rows, cols, radius))


def learn_egn(target: ArrayLike, omega: GraphWeights, b0: ArrayLike, cfg: LearnConfig = LearnConfig(), *,
              v0: Optional[ArrayLike] = None) -> LearnResult:
    """
    Learns ``B`` such that the tangent dynamics from `v0` (the barycenter if omitted) ends close to `target` at
    ``cfg.horizon``.

    The run aborts with the best iterate when the loss did not improve for ``cfg.patience`` iterations and the
    current loss is above the best one, or when the loss becomes non-finite.
    """
    target = np.array(target, dtype=float)
    v0 = np.zeros_like(target) if v0 is None else np.asarray(v0, dtype=float)
    problem = egn_tangent_problem(omega, b0, v0, target, cfg.horizon)
    integrator = IntegratorConfig(scheme='rk4-tangent', h=cfg.h, t_end=cfg.horizon)

    velocity = np.zeros_like(problem.params)
    history: List[float] = []
    best_b, best_loss, best_iteration, best_state = problem.params, np.inf, 0, None
    aborted = False

    for iteration in range(cfg.iterations + 1):
        try:
            adjoint = solve_adjoint(problem, integrator, cfg.nodes)
        except NumericalFailure as e:
            logger.warning('Aborting learning at iteration %d: %s', iteration, e)
            aborted = True
            break
        history.append(adjoint.loss)
        if adjoint.loss < best_loss:
            best_b, best_loss, best_iteration, best_state = problem.params, adjoint.loss, iteration, adjoint.final_state
        logger.info('Iteration %d: loss %.6g', iteration, adjoint.loss)

        if iteration - best_iteration >= cfg.patience and adjoint.loss > best_loss:
            logger.warning('Loss did not improve for %d iterations, returning the best iterate', cfg.patience)
            aborted = True
            break
        if iteration == cfg.iterations:
            break

        gradient = adjoint.gradient
        norm = np.linalg.norm(gradient)
        if norm > cfg.clip_norm:
            gradient = gradient * (cfg.clip_norm / norm)
        velocity = cfg.momentum * velocity - cfg.learning_rate * gradient
        problem = problem.with_params(problem.params + velocity)

    if best_state is None:
        best_state = solve_forward(problem.with_params(best_b), integrator)
    assignment = np.argmax(best_state, axis=1)
    accuracy = float(np.mean(assignment == np.argmax(target, axis=1)))
    return LearnResult(
        b=best_b.tolist(),
        loss_history=history,
        initial_loss=history[0] if history else float('nan'),
        best_loss=float(best_loss),
        best_iteration=best_iteration,
        assignment=assignment.tolist(),
        accuracy=accuracy,
        aborted=aborted,
    )
