import numpy as np
import pytest

from data_types.errors import InvalidParameterError, RankDeficientDataError
from data_types.methods import StepRule, TerminationReason
from data_types.model import HyperParams, Trajectory
from services import full_observation
from services.simulation import simulate_full


def _rotation(angle):
    return np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])


def _orthogonal(rng, n):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q


def _random_trajectory(rng, n, horizon, scale=0.9):
    return simulate_full(scale * _orthogonal(rng, n), rng.standard_normal(n), horizon)


def test_least_squares_scalar(scalar_trajectory):
    np.testing.assert_allclose(full_observation.least_squares(scalar_trajectory), [[0.5]])


def test_least_squares_constant_trajectory_is_rank_deficient():
    trajectory = simulate_full(np.eye(2), [1.0, 2.0], 4)
    with pytest.raises(RankDeficientDataError) as error:
        full_observation.least_squares(trajectory)
    assert error.value.rank == 1


def test_least_squares_recovers_rotation():
    A = 0.9 * _rotation(0.3)
    trajectory = simulate_full(A, [1.0, 0.5], 6)
    np.testing.assert_allclose(full_observation.least_squares(trajectory), A, atol=1e-12)


def test_least_squares_rejects_degenerate_span():
    trajectory = simulate_full(np.diag([0.5, 0.3]), [1.0, 0.0], 5)
    with pytest.raises(RankDeficientDataError) as error:
        full_observation.least_squares(trajectory)
    assert error.value.rank == 1
    assert "rank-deficient" in str(error.value)


@pytest.mark.parametrize("gamma, expected", [(1.0, 0.625 / 2.25), (4.0, 0.625 / 1.5)])
def test_ridge_scalar(scalar_trajectory, gamma, expected):
    np.testing.assert_allclose(full_observation.ridge(scalar_trajectory, gamma), [[expected]])


def test_ridge_vanishes_for_small_gamma(scalar_trajectory):
    assert abs(full_observation.ridge(scalar_trajectory, 1e-12)[0, 0]) < 1e-11


def test_ridge_rejects_non_positive_gamma(scalar_trajectory):
    with pytest.raises(InvalidParameterError):
        full_observation.ridge(scalar_trajectory, 0.0)


def test_dual_solve_scalar(scalar_trajectory):
    coefficients, _ = full_observation.dual_solve(scalar_trajectory, 1.0)
    np.testing.assert_allclose(coefficients.vectors.ravel(), [-2.0 / 9.0, -1.0 / 9.0], atol=1e-12)
    np.testing.assert_allclose(
        full_observation.reconstruct_from_dual(scalar_trajectory, coefficients),
        [[0.625 / 2.25]],
    )


def test_dual_solve_zero_successors():
    trajectory = Trajectory.from_states([[1.0], [0.0], [0.0]])
    coefficients, value = full_observation.dual_solve(trajectory, 1.0)
    np.testing.assert_array_equal(coefficients.vectors, np.zeros((2, 1)))
    assert value == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_dual_matches_ridge_and_is_minimal(seed):
    rng = np.random.default_rng(seed)
    trajectory = _random_trajectory(rng, 3, 6)
    gamma = 10.0
    coefficients, value = full_observation.dual_solve(trajectory, gamma)
    np.testing.assert_allclose(
        full_observation.reconstruct_from_dual(trajectory, coefficients),
        full_observation.ridge(trajectory, gamma),
        atol=1e-10,
    )
    for _ in range(100):
        perturbed = coefficients.vectors + 0.1 * rng.standard_normal(coefficients.vectors.shape)
        assert value <= full_observation.dual_value(trajectory.states, perturbed, gamma)


def test_objective_and_gradient_at_zero(scalar_trajectory):
    value, gradient = full_observation.objective_and_gradient(
        np.zeros((1, 1)), scalar_trajectory, 1.0
    )
    assert value == pytest.approx(0.15625)
    np.testing.assert_allclose(gradient, [[-0.625]])


def test_gradient_vanishes_at_ridge(rng):
    trajectory = _random_trajectory(rng, 3, 8)
    A = full_observation.ridge(trajectory, 2.0)
    _, gradient = full_observation.objective_and_gradient(A, trajectory, 2.0)
    assert np.linalg.norm(gradient) <= 1e-12


def test_gradient_matches_finite_differences(rng):
    trajectory = _random_trajectory(rng, 2, 6)
    A = rng.standard_normal((2, 2))
    _, gradient = full_observation.objective_and_gradient(A, trajectory, 3.0)
    epsilon = 1e-6
    numeric = np.zeros_like(A)
    for index in np.ndindex(A.shape):
        step = np.zeros_like(A)
        step[index] = epsilon
        upper, _ = full_observation.objective_and_gradient(A + step, trajectory, 3.0)
        lower, _ = full_observation.objective_and_gradient(A - step, trajectory, 3.0)
        numeric[index] = (upper - lower) / (2 * epsilon)
    assert np.linalg.norm(numeric - gradient) <= 1e-6 * np.linalg.norm(gradient)


def test_gradient_descent_scalar(scalar_trajectory):
    opts = HyperParams(gamma=1.0, step=0.5, grad_tol=1e-12)
    A, report = full_observation.gradient_descent(scalar_trajectory, 1.0, opts)
    assert report.converged
    assert abs(A[0, 0] - 0.625 / 2.25) <= 1e-10
    assert report.extras["step_bound"] == pytest.approx(2.0 / 2.25)


def test_gradient_descent_from_fixed_point(scalar_trajectory):
    start = full_observation.ridge(scalar_trajectory, 1.0)
    _, report = full_observation.gradient_descent(
        scalar_trajectory, 1.0, HyperParams(grad_tol=1e-9), initial=start
    )
    assert report.converged
    assert report.iterations <= 1


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("gamma", [0.1, 1.0, 10.0])
def test_gradient_descent_matches_ridge(seed, gamma):
    rng = np.random.default_rng(seed)
    n = 1 + seed % 3
    trajectory = _random_trajectory(rng, n, 20)
    opts = HyperParams(gamma=gamma, grad_tol=1e-11, max_iters=200000)
    A, report = full_observation.gradient_descent(trajectory, gamma, opts)
    assert report.converged
    assert np.max(np.abs(A - full_observation.ridge(trajectory, gamma))) <= 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_step_inside_bound_is_monotone(seed):
    rng = np.random.default_rng(seed)
    trajectory = _random_trajectory(rng, 3, 10)
    gamma = 5.0
    step = 0.99 * full_observation.step_bound(trajectory, gamma)
    _, report = full_observation.gradient_descent(
        trajectory, gamma, HyperParams(gamma=gamma, step=step, max_iters=200)
    )
    assert not report.diverged
    assert report.is_monotone(slack=1e-12)


def test_step_above_bound_diverges(scalar_trajectory):
    step = 1.5 * full_observation.step_bound(scalar_trajectory, 1.0)
    _, report = full_observation.gradient_descent(
        scalar_trajectory, 1.0, HyperParams(step=step, max_iters=100)
    )
    assert report.diverged
    assert report.termination is TerminationReason.DIVERGED


def test_max_iters_is_reported_not_raised(scalar_trajectory):
    _, report = full_observation.gradient_descent(
        scalar_trajectory, 1.0, HyperParams(step=0.1, max_iters=2, grad_tol=1e-15)
    )
    assert report.termination is TerminationReason.MAX_ITERS
    assert report.iterations == 2


def test_lipschitz_step_rule(rng):
    trajectory = _random_trajectory(rng, 2, 10)
    opts = HyperParams(step_rule=StepRule.LIPSCHITZ, grad_tol=1e-11, max_iters=100000)
    A, report = full_observation.gradient_descent(trajectory, 1.0, opts)
    assert report.converged
    np.testing.assert_allclose(A, full_observation.ridge(trajectory, 1.0), atol=1e-9)


def test_recursive_update_scalar(scalar_trajectory):
    state = full_observation.ridge_state(scalar_trajectory.truncated(2), 1.0)
    np.testing.assert_allclose(state.gain, [[0.5]])
    np.testing.assert_allclose(state.estimate, [[0.25]])
    extended = full_observation.recursive_update(state, [0.5], [0.25])
    np.testing.assert_allclose(extended.gain, [[1.0 / 2.25]])
    np.testing.assert_allclose(extended.estimate, [[0.625 / 2.25]])
    assert extended.horizon == 3


def test_recursive_update_zero_regressor(scalar_trajectory):
    state = full_observation.ridge_state(scalar_trajectory, 1.0)
    extended = full_observation.recursive_update(state, [0.0], [0.0])
    np.testing.assert_array_equal(extended.gain, state.gain)
    np.testing.assert_array_equal(extended.estimate, state.estimate)


@pytest.mark.parametrize("refresh_every", [64, 7])
def test_recursive_update_matches_batch(rng, refresh_every):
    trajectory = simulate_full(_orthogonal(rng, 3), rng.standard_normal(3), 52)
    state = full_observation.ridge_state(trajectory.truncated(2), 1.0)
    deviation = 0.0
    for horizon in range(3, 53):
        state = full_observation.recursive_update(
            state,
            trajectory.state(horizon - 1),
            trajectory.state(horizon),
            refresh_every=refresh_every,
        )
        batch = full_observation.ridge(trajectory.truncated(horizon), 1.0)
        deviation = max(deviation, np.max(np.abs(state.estimate - batch)))
    assert deviation <= 1e-10


def test_neumann_scalar(scalar_trajectory):
    estimate = full_observation.neumann_expansion(scalar_trajectory, 10.0, 2)
    assert estimate[0, 0] == pytest.approx(0.5 * (1 - 0.08 + 0.0064))
    assert abs(estimate[0, 0] - full_observation.ridge(scalar_trajectory, 10.0)[0, 0]) < 3e-4
    np.testing.assert_array_equal(
        full_observation.neumann_expansion(scalar_trajectory, 10.0, 0),
        full_observation.least_squares(scalar_trajectory),
    )


@pytest.mark.parametrize("order", [0, 1, 2])
def test_neumann_order_of_accuracy(order):
    trajectory = simulate_full(0.9 * _rotation(0.3), [1.0, 0.5], 10)

    def error(gamma):
        return np.linalg.norm(
            full_observation.neumann_expansion(trajectory, gamma, order)
            - full_observation.ridge(trajectory, gamma)
        )

    assert error(100.0) / error(200.0) >= 0.8 * 2 ** (order + 1)


def test_min_norm_limit_full_rank(scalar_trajectory):
    diagnostics = full_observation.min_norm_limit(scalar_trajectory, [1.0, 10.0, 100.0, 1e4])
    np.testing.assert_allclose(diagnostics.minimum_norm, [[0.5]])
    assert diagnostics.distances_non_increasing
    assert diagnostics.distances[-1] < 1e-4


def test_min_norm_limit_rank_deficient():
    A = np.zeros((3, 3))
    A[:2, :2] = 0.9 * _rotation(0.4)
    A[2, 2] = 0.5
    trajectory = simulate_full(A, [1.0, 0.5, 0.0], 10)
    diagnostics = full_observation.min_norm_limit(
        trajectory, [1.0, 10.0, 1e2, 1e3, 1e4, 1e5, 1e6]
    )
    expected = np.zeros((3, 3))
    expected[:2, :2] = A[:2, :2]
    np.testing.assert_allclose(diagnostics.minimum_norm, expected, atol=1e-12)
    assert diagnostics.distances_non_increasing
    assert diagnostics.distances[-1] <= 1e-4
    assert diagnostics.consistency_residual <= 1e-12


def test_min_norm_limit_zero_trajectory():
    trajectory = Trajectory(np.zeros((4, 2)))
    diagnostics = full_observation.min_norm_limit(trajectory, [1.0, 100.0])
    np.testing.assert_array_equal(diagnostics.minimum_norm, np.zeros((2, 2)))
    assert diagnostics.distances == [0.0, 0.0]


@pytest.mark.parametrize("gamma", [0.1, 1.0, 10.0])
def test_ridge_objective_below_true_norm(rng, gamma):
    A = 0.9 * _orthogonal(rng, 3)
    trajectory = simulate_full(A, rng.standard_normal(3), 6)
    true_value, _ = full_observation.objective_and_gradient(A, trajectory, gamma)
    assert true_value == pytest.approx(0.5 * np.sum(A**2), abs=1e-12)
    value, _ = full_observation.objective_and_gradient(
        full_observation.ridge(trajectory, gamma), trajectory, gamma
    )
    assert value <= true_value + 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_ridge_norm_grows_with_gamma(seed):
    trajectory = _random_trajectory(np.random.default_rng(seed), 3, 6)
    diagnostics = full_observation.min_norm_limit(trajectory, list(np.logspace(-2, 4, 30)))
    assert np.all(np.diff(diagnostics.norms) >= -1e-12)
    assert diagnostics.norms[-1] <= np.linalg.norm(diagnostics.minimum_norm) + 1e-9
