import json
from dataclasses import replace

import numpy as np
import pytest
from scipy.special import softmax

from metasimplex.dynamics import IntegratorConfig
from metasimplex.errors import CheckpointBudgetExceeded, ConfigError, DimensionMismatch
from metasimplex.learning import (LearnConfig, LearnProblem, LearnResult, adjoint_gradient, cross_entropy_gradient,
                                  cross_entropy_loss, egn_tangent_problem, finite_diff_gradient, labeling_dataset,
                                  learn_egn, solve_adjoint, solve_forward)
from metasimplex.payoff import GraphWeights
from metasimplex.simplex import project_tangent


def growth_problem(**kwargs) -> LearnProblem:
    return LearnProblem(field=lambda v, p, t: p * v, v0=np.array([1.0]), params=np.array([0.5]), horizon=1.0,
                        loss=lambda v: float(v[0] ** 2 / 2), loss_gradient=lambda v: v, **kwargs)


@pytest.fixture(scope="session")
def small_dataset():
    return labeling_dataset(rows=4, cols=4, c=2, seed=1)


@pytest.fixture(scope="session")
def egn_problem(small_dataset):
    rng = np.random.default_rng(2)
    return egn_tangent_problem(small_dataset.omega, np.eye(2) + 0.1 * rng.standard_normal((2, 2)), small_dataset.v0,
                               small_dataset.target, horizon=1.0)


class TestScalarGrowth:
    def test_forward(self):
        v = solve_forward(growth_problem(), IntegratorConfig(h=1e-2))
        assert v[0] == pytest.approx(np.exp(0.5), rel=1e-9)

    @pytest.mark.parametrize("vjps", [
        dict(vjp_state=lambda v, p, t, lam: p * lam, vjp_params=lambda v, p, t, lam: v * lam),
        dict(),
    ])
    def test_adjoint(self, vjps):
        # d/dp (v(T)^2 / 2) = T exp(2 p T)
        adjoint = solve_adjoint(growth_problem(**vjps), IntegratorConfig(h=1e-3), nodes=16)
        assert adjoint.gradient[0] == pytest.approx(np.exp(1.0), rel=1e-5)
        assert adjoint.costate[0] == pytest.approx(np.exp(1.0), rel=1e-6)
        assert adjoint.loss == pytest.approx(np.exp(1.0) / 2)
        assert adjoint.checkpoints == 17

    def test_finite_differences(self):
        gradient = finite_diff_gradient(growth_problem(), IntegratorConfig(h=1e-3))
        assert gradient[0] == pytest.approx(np.exp(1.0), rel=1e-6)

    def test_checkpoint_budget(self):
        with pytest.raises(CheckpointBudgetExceeded):
            solve_adjoint(growth_problem(), IntegratorConfig(h=1e-2), nodes=50, checkpoint_budget=10)

    def test_more_nodes_than_steps(self):
        adjoint = solve_adjoint(growth_problem(), IntegratorConfig(h=0.25), nodes=256)
        assert adjoint.checkpoints == 5

    def test_invalid_problem(self):
        with pytest.raises(ConfigError):
            LearnProblem(field=lambda v, p, t: v, v0=[1.0], params=[1.0], horizon=0.0, loss=float,
                         loss_gradient=np.ones_like)
        with pytest.raises(DimensionMismatch):
            growth_problem().with_params([1.0, 2.0])



@pytest.mark.parametrize("vjps", [dict(vjp_params=lambda v, p, t, lam: np.zeros_like(p)), dict()])
def test_field_without_parameters(vjps):
    problem = LearnProblem(field=lambda v, p, t: -v, v0=np.array([1.0, 2.0]), params=np.array([0.5, 3.0]), horizon=1.0,
                           loss=lambda v: float(v @ v), loss_gradient=lambda v: 2 * v, **vjps)
    assert np.allclose(adjoint_gradient(problem, IntegratorConfig(h=0.01), nodes=8), 0.0, atol=1e-12)

def test_cross_entropy():
    target = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    V = np.array([[2.0, -1.0, -1.0], [0.5, 0.0, -0.5]])
    step = 1e-6
    numeric = np.zeros_like(V)
    for index in np.ndindex(V.shape):
        offset = np.zeros_like(V)
        offset[index] = step
        numeric[index] = (cross_entropy_loss(target, V + offset) - cross_entropy_loss(target, V - offset)) / (2 * step)
    assert np.allclose(cross_entropy_gradient(target, V), numeric, atol=1e-8)
    assert cross_entropy_loss(target, np.zeros((2, 3))) == pytest.approx(2 * np.log(3))


def test_egn_adjoint_matches_finite_differences(egn_problem):
    cfg = IntegratorConfig(h=0.01)
    adjoint = adjoint_gradient(egn_problem, cfg, nodes=32)
    numeric = finite_diff_gradient(egn_problem, cfg)
    assert adjoint.shape == (2, 2)
    assert np.allclose(adjoint, numeric, rtol=1e-3, atol=1e-4)


def test_egn_vjps_match_finite_differences(egn_problem):
    rng = np.random.default_rng(0)
    V = project_tangent(rng.standard_normal(egn_problem.v0.shape))
    costate = rng.standard_normal(V.shape)
    no_vjps = replace(egn_problem, vjp_state=None, vjp_params=None)
    assert np.allclose(egn_problem.state_vjp(V, 0.0, costate), no_vjps.state_vjp(V, 0.0, costate), atol=1e-7)
    assert np.allclose(egn_problem.params_vjp(V, 0.0, costate), no_vjps.params_vjp(V, 0.0, costate), atol=1e-7)


def test_egn_problem_dimensions(small_dataset):
    with pytest.raises(DimensionMismatch):
        egn_tangent_problem(GraphWeights.path_graph(3), np.eye(2), small_dataset.v0, small_dataset.target, 1.0)


class TestLabelingDataset:
    def test_stripes(self):
        dataset = labeling_dataset(rows=2, cols=7, c=3)
        assert dataset.truth.tolist() == [0, 0, 0, 1, 1, 2, 2] * 2
        assert dataset.target.shape == (14, 3)
        assert np.allclose(dataset.initial.sum(axis=1), 1)
        assert dataset.omega.n == 14
        assert np.allclose(dataset.v0.sum(axis=1), 0)

    def test_seeded(self):
        assert np.array_equal(labeling_dataset(seed=3).initial, labeling_dataset(seed=3).initial)
        assert not np.array_equal(labeling_dataset(seed=3).initial, labeling_dataset(seed=4).initial)


class TestLearnConfig:
    @pytest.mark.parametrize("kwargs, field", [
        (dict(iterations=-1), 'iterations'),
        (dict(learning_rate=0.0), 'learning_rate'),
        (dict(momentum=1.0), 'momentum'),
        (dict(clip_norm=0.0), 'clip_norm'),
        (dict(patience=0), 'patience'),
    ])
    def test_invalid(self, kwargs, field):
        with pytest.raises(ConfigError) as info:
            LearnConfig(**kwargs)
        assert info.value.field == field


class TestLearnEgn:
    def test_improves_loss(self, small_dataset):
        cfg = LearnConfig(iterations=8, learning_rate=0.2, horizon=3.0, h=0.1, nodes=16)
        result = learn_egn(small_dataset.target, small_dataset.omega, np.eye(2), cfg, v0=small_dataset.v0)
        assert result.best_loss <= result.initial_loss
        assert result.best_loss == min(result.loss_history)
        assert result.loss_history[result.best_iteration] == result.best_loss
        assert len(result.assignment) == 16
        assert 0 <= result.accuracy <= 1
        assert result.b_matrix.shape == (2, 2)

    def test_zero_iterations(self, small_dataset):
        cfg = LearnConfig(iterations=0, horizon=1.0, h=0.1, nodes=8)
        result = learn_egn(small_dataset.target, small_dataset.omega, np.eye(2), cfg)
        assert len(result.loss_history) == 1
        assert result.best_iteration == 0
        assert result.b == [[1.0, 0.0], [0.0, 1.0]]
        assert not result.aborted
        # barycenter start, no signal
        assert result.initial_loss == pytest.approx(16 * np.log(2))

    def test_result_serializes(self, small_dataset):
        cfg = LearnConfig(iterations=1, horizon=1.0, h=0.1, nodes=8)
        result = learn_egn(small_dataset.target, small_dataset.omega, np.eye(2), cfg, v0=small_dataset.v0)
        restored = LearnResult.from_json(result.to_json())
        assert restored == result
        assert set(json.loads(result.to_json())) >= {'b', 'loss_history', 'accuracy', 'aborted'}


def test_reached_target_has_no_gradient(small_dataset):
    cfg = LearnConfig(iterations=2, horizon=1.0, h=0.1, nodes=8)
    integrator = IntegratorConfig(scheme='rk4-tangent', h=cfg.h, t_end=cfg.horizon)
    unlearned = egn_tangent_problem(small_dataset.omega, np.eye(2), small_dataset.v0, small_dataset.target, cfg.horizon)
    reached = softmax(solve_forward(unlearned, integrator), axis=-1)

    problem = egn_tangent_problem(small_dataset.omega, np.eye(2), small_dataset.v0, reached, cfg.horizon)
    assert np.allclose(adjoint_gradient(problem, integrator, nodes=cfg.nodes), 0.0, atol=1e-10)

    result = learn_egn(reached, small_dataset.omega, np.eye(2), cfg, v0=small_dataset.v0)
    assert np.allclose(result.b_matrix, np.eye(2), atol=1e-9)
    assert result.loss_history == pytest.approx([result.initial_loss] * 3)
