import numpy as np
import pytest
from hypothesis import given

from metasimplex.errors import DimensionMismatch, InvalidState, KindMismatch, NumericalFailure, SizeCapExceeded
from metasimplex.meta import DEFAULT_SIZE_CAP, embed_T, lift_Q
from metasimplex.payoff import (GameMatrix, GraphWeights, PayoffModel, embed_payoff, embedded_potential_gradient,
                                embedded_potential_value, eval_payoff, mean_payoff, multigame_matrix, payoff_jacobian,
                                payoff_matrix, potential_gradient, potential_value)
from tests.strategies import assignment_states

SWAP = GraphWeights([[0, 1], [1, 0]])


@pytest.fixture(scope="session")
def egn_model() -> PayoffModel:
    return PayoffModel.egn(GraphWeights.path_graph(3), GameMatrix([[1.0, 0.5], [0.0, 2.0]]))


@pytest.fixture(scope="session")
def quadratic_potential() -> PayoffModel:
    rng = np.random.default_rng(3)
    a = rng.normal(size=(6, 6))
    return PayoffModel.potential_quadratic(a + a.T, n=3, c=2)


class TestGraphWeights:
    def test_path_graph_is_doubly_stochastic(self):
        omega = GraphWeights.path_graph(5)
        assert omega.symmetric
        assert np.allclose(omega.omega.sum(axis=1), 1)

    def test_grid_graph(self):
        omega = GraphWeights.grid_graph(3, 4)
        assert omega.n == 12
        assert np.allclose(omega.omega.sum(axis=1), 1)
        # corner pixel: itself and three neighbours
        assert np.count_nonzero(omega.omega[0]) == 4
        # interior pixel: full 3 x 3 neighbourhood
        assert np.count_nonzero(omega.omega[5]) == 9

    def test_unknown_weighting(self):
        with pytest.raises(ValueError):
            GraphWeights.path_graph(3, weighting='cosine')

    @pytest.mark.parametrize("omega, error", [
        ([[1.0, 0.0]], DimensionMismatch),
        ([[np.inf, 0.0], [0.0, 1.0]], InvalidState),
    ])
    def test_invalid(self, omega, error):
        with pytest.raises(error):
            GraphWeights(omega)

    def test_read_only(self):
        with pytest.raises(ValueError):
            SWAP.omega[0, 0] = 1.0


class TestEvalPayoff:
    def test_sflow(self):
        model = PayoffModel.sflow(SWAP, c=3)
        W = np.array([[0.2, 0.3, 0.5], [1.0, 0.0, 0.0]])
        assert np.array_equal(eval_payoff(model, W), W[::-1])

    def test_egn(self):
        model = PayoffModel.egn(SWAP, GameMatrix([[0.0, 1.0], [1.0, 0.0]]))
        assert np.allclose(eval_payoff(model, [[0.2, 0.8], [0.3, 0.7]]), [[0.7, 0.3], [0.8, 0.2]])

    def test_multigame(self):
        games = [GameMatrix(np.eye(2)), GameMatrix([[0.0, 2.0], [1.0, 0.0]])]
        model = PayoffModel.multigame(games)
        assert np.allclose(eval_payoff(model, [[0.4, 0.6], [0.5, 0.5]]), [[0.4, 0.6], [1.0, 0.5]])

    def test_linear(self):
        a_bar = np.arange(16, dtype=float).reshape(4, 4)
        model = PayoffModel.linear(a_bar, n=2, c=2)
        W = np.array([[0.5, 0.5], [0.25, 0.75]])
        assert np.allclose(eval_payoff(model, W).ravel(), a_bar @ W.ravel())

    def test_zero_on_boundary(self):
        assert np.array_equal(eval_payoff(PayoffModel.zero(2, 3), [[1, 0, 0], [0, 0, 1]]), np.zeros((2, 3)))

    def test_potential_payoff_is_projected(self, quadratic_potential):
        F = eval_payoff(quadratic_potential, np.full((3, 2), 0.5))
        assert np.allclose(F.sum(axis=1), 0)

    def test_custom(self):
        model = PayoffModel.custom(lambda W: W ** 2, n=2, c=2)
        assert np.allclose(eval_payoff(model, [[0.5, 0.5], [1.0, 0.0]]), [[0.25, 0.25], [1.0, 0.0]])

    def test_custom_wrong_shape(self):
        model = PayoffModel.custom(lambda W: W.ravel(), n=2, c=2)
        with pytest.raises(DimensionMismatch):
            eval_payoff(model, np.full((2, 2), 0.5))

    def test_non_finite(self):
        model = PayoffModel.custom(lambda W: np.full(W.shape, np.nan), n=1, c=2)
        with pytest.raises(NumericalFailure):
            eval_payoff(model, [[1.0, 0.0]])

    def test_dimension_mismatch(self, egn_model):
        with pytest.raises(DimensionMismatch):
            eval_payoff(egn_model, np.full((2, 2), 0.5))


class TestConstruction:
    def test_multigame_needs_equal_sizes(self):
        with pytest.raises(DimensionMismatch):
            PayoffModel.multigame([GameMatrix(np.eye(2)), GameMatrix(np.eye(3))])
        with pytest.raises(DimensionMismatch):
            PayoffModel.multigame([])

    def test_linear_size(self):
        with pytest.raises(DimensionMismatch):
            PayoffModel.linear(np.eye(4), n=2, c=3)

    def test_asymmetric_potential(self):
        with pytest.raises(KindMismatch):
            PayoffModel.potential_quadratic(np.triu(np.ones((4, 4))), n=2, c=2)


@pytest.mark.parametrize("model", [
    PayoffModel.sflow(GraphWeights.path_graph(3), c=2),
    PayoffModel.egn(GraphWeights.path_graph(3), GameMatrix([[1.0, 0.5], [0.0, 2.0]])),
    PayoffModel.multigame([GameMatrix(np.eye(2)), GameMatrix([[0.0, 1.0], [1.0, 0.0]]),
                           GameMatrix([[2.0, 0.0], [0.0, 1.0]])]),
])
def test_payoff_matrix_matches_evaluation(model):
    W = np.array([[0.1, 0.9], [0.6, 0.4], [0.5, 0.5]])
    assert np.allclose(payoff_matrix(model) @ W.ravel(), eval_payoff(model, W).ravel())


def test_payoff_matrix_of_custom():
    with pytest.raises(KindMismatch):
        payoff_matrix(PayoffModel.custom(np.sin, n=1, c=2))


def test_jacobian_by_central_differences():
    model = PayoffModel.custom(lambda W: W ** 2, n=1, c=2)
    W = np.array([[0.3, 0.7]])
    assert np.allclose(payoff_jacobian(model, W), np.diag([0.6, 1.4]), atol=1e-8)


def test_jacobian_of_quadratic_potential(quadratic_potential):
    W = np.full((3, 2), 0.5)
    step = 1e-6
    for k in range(6):
        offset = np.zeros(6)
        offset[k] = step
        offset = offset.reshape(3, 2)
        column = (eval_payoff(quadratic_potential, W + offset) - eval_payoff(quadratic_potential, W - offset))
        assert np.allclose(payoff_jacobian(quadratic_potential, W)[:, k], column.ravel() / (2 * step), atol=1e-7)


def test_mean_payoff():
    model = PayoffModel.sflow(GraphWeights.identity(2), c=2)
    W = [[0.5, 0.5], [1.0, 0.0]]
    assert mean_payoff(model, W) == pytest.approx(0.5 + 1.0)


class TestEmbeddedPayoff:
    def test_matrix_agrees_with_composition(self, egn_model):
        embedded = embed_payoff(egn_model)
        p = np.random.default_rng(0).dirichlet(np.ones(embedded.size))
        assert embedded.matrix.shape == (8, 8)
        assert np.allclose(embedded(p), embedded.via_matrix(p))

    def test_custom_has_no_matrix(self):
        embedded = embed_payoff(PayoffModel.custom(lambda W: W, n=2, c=2))
        assert embedded.matrix is None
        with pytest.raises(KindMismatch):
            embedded.via_matrix(np.full(4, 0.25))

    def test_size_cap(self):
        with pytest.raises(SizeCapExceeded):
            embed_payoff(PayoffModel.zero(5, 3), cap=100)

    def test_raised_cap_reaches_the_lift(self):
        n, c, cap = 21, 2, 2 ** 22
        assert c ** n > DEFAULT_SIZE_CAP
        embedded = embed_payoff(PayoffModel.zero(n, c), cap)
        assert embedded.cap == cap
        payoff = embedded(embed_T(np.full((n, c), 0.5), cap))
        assert payoff.shape == (c ** n,)
        assert not np.any(payoff)

    def test_potential_gradient_uses_cap(self):
        n, cap = 21, 2 ** 22
        model = PayoffModel.potential_quadratic(np.zeros((2 * n, 2 * n)), n=n, c=2)
        p = embed_T(np.full((n, 2), 0.5), cap)
        with pytest.raises(SizeCapExceeded):
            embedded_potential_gradient(model, p)
        assert not np.any(embedded_potential_gradient(model, p, cap))

    def test_multigame_matrix(self):
        games = [np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([[0.0, 3.0], [1.0, 0.0]])]
        model = PayoffModel.multigame([GameMatrix(game) for game in games])
        joint = multigame_matrix(games)
        assert joint[1, 2] == games[0][0, 1] + games[1][1, 0]
        W = np.array([[0.3, 0.7], [0.8, 0.2]])
        p = embed_T(W)
        assert np.allclose(joint @ p, embed_payoff(model)(p))


class TestPotential:
    def test_value_and_gradient(self, quadratic_potential):
        W = np.array([[0.2, 0.8], [0.5, 0.5], [0.9, 0.1]])
        s = W.ravel()
        assert potential_value(quadratic_potential, W) == pytest.approx(0.5 * s @ quadratic_potential.a_bar @ s)
        assert np.allclose(potential_gradient(quadratic_potential, W).ravel(), quadratic_potential.a_bar @ s)

    def test_requires_potential(self, egn_model):
        with pytest.raises(KindMismatch):
            potential_value(egn_model, np.full((3, 2), 0.5))

    def test_callback_potential(self):
        model = PayoffModel.potential_from(lambda W: float(np.sum(W ** 3)), lambda W: 3 * W ** 2, n=1, c=2)
        assert potential_value(model, [[0.5, 0.5]]) == pytest.approx(0.25)
        assert np.allclose(eval_payoff(model, [[0.5, 0.5]]), 0)

    @given(assignment_states(3, 2))
    def test_embedded_potential(self, W):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(6, 6))
        model = PayoffModel.potential_quadratic(a + a.T, n=3, c=2)
        p = embed_T(W)
        assert embedded_potential_value(model, p) == pytest.approx(potential_value(model, W))
        assert np.allclose(embedded_potential_gradient(model, p), lift_Q(potential_gradient(model, W)))
