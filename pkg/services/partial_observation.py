"""
Identification of A from (x, C, y_2..y_T).

The descent works on Z = (A, v_1..v_{T-1}) with states x_{t+1} = A x_t + v_t,
x_1 = x, and objective

    J(Z) = ½tr(AA*) + (γ/2)Σ|v_t|² + (μ/2)Σ_{t>=2}|y_t - C x_t|².

Its gradient comes from the adjoint p_T = -μC*(y_T - C x_T),
p_t = A*p_{t+1} - μC*(y_t - C x_t):  DJ = (A + Σ p_{t+1}x_t*, γv_t + p_{t+1}).
J is not convex in Z; the descent only certifies stationarity.
"""
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from data_types.errors import (
    DependentObservationRowsError,
    DimensionMismatchError,
    InvalidParameterError,
)
from data_types.methods import StepRule, TerminationReason
from data_types.model import HyperParams, ObservedData, Trajectory
from data_types.results import (
    AdjointSequence,
    DecisionPoint,
    DescentReport,
    GradientValue,
)
from handlers.base import load_section
from services import full_observation
from services.linalg import DEFAULT_RANK_TOL, as_square, numerical_rank, spd_solve
from services.smoother import euler_residuals
from utils.logger import Logger

logger = Logger(__name__)


def _check_weights(gamma: float, mu: float) -> None:
    if not gamma > 0:
        raise InvalidParameterError(f"gamma must be > 0, got {gamma}")
    if not mu > 0:
        raise InvalidParameterError(f"mu must be > 0, got {mu}")


def _check_point(point: DecisionPoint, data: ObservedData) -> None:
    if point.A.shape != (data.n, data.n) or point.controls.shape != (
        data.horizon - 1,
        data.n,
    ):
        raise DimensionMismatchError(
            f"decision point shapes {point.A.shape}/{point.controls.shape} do not match "
            f"n={data.n}, T={data.horizon}"
        )


def lift_states(data: ObservedData, rank_tol: float = DEFAULT_RANK_TOL) -> Trajectory:
    """
    x̂_1 = x and x̂_t = C*(CC*)^{-1} y_t, the minimum-norm preimage of each observation.

    Raises:
        DependentObservationRowsError: C does not have full row rank.
    """
    rank = numerical_rank(data.C, rank_tol)
    if rank < data.p:
        logger.error(f"lift rejected: C has rank {rank} < p={data.p}")
        raise DependentObservationRowsError(rank, data.p)
    lifted = spd_solve(data.C @ data.C.T, data.observations.T).T @ data.C
    return Trajectory(np.vstack([data.x, lifted]))


def lift_estimator(
    data: ObservedData, gamma: float, rank_tol: float = DEFAULT_RANK_TOL
) -> NDArray:
    """Ridge estimate on the lifted states."""
    return full_observation.ridge(lift_states(data, rank_tol), gamma)


def forward_states(A: NDArray, controls: NDArray, x: NDArray) -> NDArray:
    """x_1 = x, x_{t+1} = A x_t + v_t."""
    states = np.empty((controls.shape[0] + 1, x.size))
    states[0] = x
    for k in range(controls.shape[0]):
        states[k + 1] = A @ states[k] + controls[k]
    return states


def controls_from_states(A: ArrayLike, states: ArrayLike) -> NDArray:
    """v_t = x_{t+1} - A x_t."""
    states = np.asarray(states, dtype=float)
    return states[1:] - states[:-1] @ np.asarray(A, dtype=float).T


def adjoint_states(
    A: NDArray, states: NDArray, data: ObservedData, mu: float
) -> NDArray:
    """p_1..p_T; p_1 = A*p_2 since y_1 := Cx makes the first innovation vanish."""
    C = data.C
    innovations = data.observations - states[1:] @ C.T
    adjoints = np.zeros_like(states)
    adjoints[-1] = -mu * C.T @ innovations[-1]
    for k in range(states.shape[0] - 2, 0, -1):
        adjoints[k] = A.T @ adjoints[k + 1] - mu * C.T @ innovations[k - 1]
    adjoints[0] = A.T @ adjoints[1]
    return adjoints


def objective(
    point: DecisionPoint, data: ObservedData, gamma: float, mu: float
) -> float:
    states = forward_states(point.A, point.controls, data.x)
    innovations = data.observations - states[1:] @ data.C.T
    return float(
        0.5 * np.sum(point.A**2)
        + 0.5 * gamma * np.sum(point.controls**2)
        + 0.5 * mu * np.sum(innovations**2)
    )


def objective_in_states(
    A: ArrayLike, states: ArrayLike, data: ObservedData, gamma: float, mu: float
) -> float:
    """J(A, x(.)) = ½tr(AA*) + (γ/2)Σ|x_{t+1} - A x_t|² + (μ/2)Σ|y_t - C x_t|²."""
    A = as_square(A, "A")
    states = np.asarray(states, dtype=float)
    dynamics = controls_from_states(A, states)
    innovations = data.observations - states[1:] @ data.C.T
    return float(
        0.5 * np.sum(A**2)
        + 0.5 * gamma * np.sum(dynamics**2)
        + 0.5 * mu * np.sum(innovations**2)
    )


def objective_and_gradient(
    point: DecisionPoint, data: ObservedData, gamma: float, mu: float
) -> tuple[float, GradientValue, NDArray, AdjointSequence]:
    """
    Evaluates J(Z) and DJ(Z) by one forward and one adjoint sweep.

    Returns:
        tuple: (J, DJ, states x_1..x_T, adjoints p_1..p_T)
    """
    _check_weights(gamma, mu)
    _check_point(point, data)
    states = forward_states(point.A, point.controls, data.x)
    adjoints = adjoint_states(point.A, states, data, mu)
    innovations = data.observations - states[1:] @ data.C.T
    value = (
        0.5 * np.sum(point.A**2)
        + 0.5 * gamma * np.sum(point.controls**2)
        + 0.5 * mu * np.sum(innovations**2)
    )
    gradient = GradientValue(
        point.A + adjoints[1:].T @ states[:-1],
        gamma * point.controls + adjoints[1:],
    )
    return float(value), gradient, states, AdjointSequence(adjoints)


def _tangent_states(
    point: DecisionPoint, direction: DecisionPoint, states: NDArray
) -> NDArray:
    # x̃_1 = 0, x̃_{t+1} = A x̃_t + Ã x_t + ṽ_t
    tangent = np.zeros_like(states)
    for k in range(states.shape[0] - 1):
        tangent[k + 1] = (
            point.A @ tangent[k] + direction.A @ states[k] + direction.controls[k]
        )
    return tangent


def hessian_quadratic_form(
    point: DecisionPoint,
    direction: DecisionPoint,
    data: ObservedData,
    gamma: float,
    mu: float,
) -> float:
    """
    <D²J(Z)Z̃, Z̃> = tr(ÃÃ*) + 2Σ p_{t+1}·Ãx̃_t + γΣ|ṽ_t|² + μΣ|Cx̃_t|².
    """
    _check_weights(gamma, mu)
    _check_point(point, data)
    _check_point(direction, data)
    states = forward_states(point.A, point.controls, data.x)
    adjoints = adjoint_states(point.A, states, data, mu)
    tangent = _tangent_states(point, direction, states)
    coupling = np.sum(adjoints[1:] * (tangent[:-1] @ direction.A.T))
    return float(
        np.sum(direction.A**2)
        + 2.0 * coupling
        + gamma * np.sum(direction.controls**2)
        + mu * np.sum((tangent[1:] @ data.C.T) ** 2)
    )


def hessian_vector_product(
    point: DecisionPoint,
    direction: DecisionPoint,
    data: ObservedData,
    gamma: float,
    mu: float,
) -> DecisionPoint:
    """
    D²J(Z)Z̃ from the tangent state x̃ and tangent adjoint
    p̃_T = μC*Cx̃_T, p̃_t = A*p̃_{t+1} + Ã*p_{t+1} + μC*Cx̃_t.
    """
    _check_point(point, data)
    _check_point(direction, data)
    C = data.C
    states = forward_states(point.A, point.controls, data.x)
    adjoints = adjoint_states(point.A, states, data, mu)
    tangent = _tangent_states(point, direction, states)

    tangent_adjoints = np.zeros_like(states)
    tangent_adjoints[-1] = mu * C.T @ (C @ tangent[-1])
    for k in range(states.shape[0] - 2, 0, -1):
        tangent_adjoints[k] = (
            point.A.T @ tangent_adjoints[k + 1]
            + direction.A.T @ adjoints[k + 1]
            + mu * C.T @ (C @ tangent[k])
        )
    return DecisionPoint(
        direction.A
        + tangent_adjoints[1:].T @ states[:-1]
        + adjoints[1:].T @ tangent[:-1],
        gamma * direction.controls + tangent_adjoints[1:],
    )


def largest_curvature(
    point: DecisionPoint,
    data: ObservedData,
    gamma: float,
    mu: float,
    iterations: Optional[int] = None,
    seed: int = 0,
) -> float:
    """Power-iteration estimate of the largest |eigenvalue| of D²J(Z)."""
    if iterations is None:
        iterations = int(load_section("NUMERICS").get("power_iterations", 20))
    rng = np.random.default_rng(seed)
    direction = DecisionPoint(
        rng.standard_normal(point.A.shape), rng.standard_normal(point.controls.shape)
    )
    direction = direction.scaled(1.0 / direction.norm())
    estimate = 0.0
    for _ in range(iterations):
        image = hessian_vector_product(point, direction, data, gamma, mu)
        estimate = image.norm()
        if estimate == 0.0:
            break
        direction = image.scaled(1.0 / estimate)
    return estimate


def trust_ball(data: ObservedData, gamma: float, mu: float) -> float:
    """M = sqrt(μ/min(1, γ) · Σ_{t>=2}|y_t|²), the radius every descent iterate stays in."""
    _check_weights(gamma, mu)
    return float(np.sqrt(mu / min(1.0, gamma) * data.observation_energy()))


def stationarity_residual(
    A: ArrayLike,
    states: ArrayLike,
    adjoints: ArrayLike,
    data: ObservedData,
    gamma: float,
    mu: float,
) -> float:
    """
    Largest violation of the optimality system: |A + Σ p_{t+1}x_t*|_F and the
    dynamics, adjoint, terminal and initial residuals of the Euler system.
    """
    A = as_square(A, "A")
    states = np.asarray(states, dtype=float)
    adjoints = np.asarray(
        adjoints.vectors if isinstance(adjoints, AdjointSequence) else adjoints,
        dtype=float,
    )
    fixed_point = np.linalg.norm(A + adjoints[1:].T @ states[:-1])
    return float(max(fixed_point, *euler_residuals(A, states, adjoints, data, gamma, mu).values()))


def _armijo_step(
    point: DecisionPoint,
    value: float,
    gradient: GradientValue,
    data: ObservedData,
    gamma: float,
    mu: float,
    trial: float,
    numerics: dict,
) -> tuple[Optional[float], Optional[DecisionPoint], float]:
    shrink = float(numerics.get("armijo_shrink", 0.5))
    sufficient = float(numerics.get("armijo_sufficient_decrease", 1e-4))
    min_step = float(numerics.get("armijo_min_step", 1e-16))
    squared = gradient.inner(gradient)
    noise = 64.0 * np.finfo(float).eps * (1.0 + abs(value))

    step = trial
    while step >= min_step:
        candidate = point.axpy(-step, gradient)
        new_value = objective(candidate, data, gamma, mu)
        target = sufficient * step * squared
        # below round-off the sufficient-decrease test is meaningless; plain decrease is kept
        if new_value <= value - target or (target < noise and new_value <= value):
            return step, candidate, new_value
        step *= shrink
    return None, None, value


def _descend(
    start: DecisionPoint,
    data: ObservedData,
    gamma: float,
    mu: float,
    opts: HyperParams,
) -> tuple[DecisionPoint, DescentReport]:
    numerics = load_section("NUMERICS")
    slack = float(numerics.get("divergence_slack", 1e-12))
    rule = opts.step_rule or StepRule.ARMIJO
    if opts.step is not None:
        rule = StepRule.FIXED
    initial_step = float(numerics.get("armijo_initial_step", 1.0))
    radius = trust_ball(data, gamma, mu)

    point = start
    value, gradient, states, adjoints = objective_and_gradient(point, data, gamma, mu)
    report = DescentReport(extras={"trust_ball": radius, "step_rule": rule.value})
    report.extras["norms"] = [point.norm()]
    report.record(value, gradient.norm())
    trial = initial_step

    report.termination = TerminationReason.MAX_ITERS
    for iteration in range(opts.max_iters):
        if report.grad_norms[-1] <= opts.grad_tol:
            report.termination = TerminationReason.CONVERGED
            break
        if rule is StepRule.ARMIJO:
            step, candidate, _ = _armijo_step(
                point, value, gradient, data, gamma, mu, trial, numerics
            )
            if step is None:
                report.termination = TerminationReason.LINE_SEARCH_FAILED
                logger.warning(
                    f"line search found no decrease at iteration {iteration + 1}, "
                    f"|DJ|={report.grad_norms[-1]:.3e}"
                )
                break
            trial = min(step / float(numerics.get("armijo_shrink", 0.5)), initial_step)
        else:
            step = opts.step or 1.0 / max(
                largest_curvature(point, data, gamma, mu, seed=opts.seed + iteration),
                np.finfo(float).tiny,
            )
            candidate = point.axpy(-step, gradient)

        new_value, gradient, states, adjoints = objective_and_gradient(
            candidate, data, gamma, mu
        )
        report.steps.append(step)
        report.record(new_value, gradient.norm())
        report.extras["norms"].append(candidate.norm())
        increased = new_value > value + slack * (1.0 + abs(value))
        point, value = candidate, new_value
        if increased or not np.isfinite(new_value):
            report.diverged = True
            report.termination = TerminationReason.DIVERGED
            logger.warning(f"objective increased at iteration {iteration + 1}")
            break
    else:
        if report.grad_norms[-1] <= opts.grad_tol:
            report.termination = TerminationReason.CONVERGED

    report.final_iterate = point
    report.extras["stationarity_residual"] = stationarity_residual(
        point.A, states, adjoints, data, gamma, mu
    )
    report.extras["states"] = states
    report.extras["adjoints"] = adjoints.vectors
    return point, report


def _restart_point(
    data: ObservedData,
    gamma: float,
    mu: float,
    rng: np.random.Generator,
) -> DecisionPoint:
    # Shrink a random draw until J(Z¹) <= (μ/2)Σ|y_t|², which keeps every iterate in the trust ball
    bound = 0.5 * mu * data.observation_energy()
    radius = trust_ball(data, gamma, mu)
    candidate = DecisionPoint(
        rng.standard_normal((data.n, data.n)),
        rng.standard_normal((data.horizon - 1, data.n)),
    )
    candidate = candidate.scaled(radius / max(candidate.norm(), 1e-300))
    for _ in range(200):
        if objective(candidate, data, gamma, mu) <= bound:
            return candidate
        candidate = candidate.scaled(0.5)
    return DecisionPoint.zeros(data.n, data.horizon)


def gradient_descent(
    data: ObservedData,
    gamma: float,
    mu: float,
    opts: Optional[HyperParams] = None,
) -> tuple[DecisionPoint, DescentReport]:
    """
    Steepest descent Z^{n+1} = Z^n - ρ DJ(Z^n) from Z¹ = (0, 0).

    The default step is chosen by Armijo backtracking, which keeps J(Z^n)
    non-increasing and hence ||Z^n|| <= M. With `opts.restarts` > 0 further
    seeded starting points inside the same sublevel set are tried and the
    run ending at the lowest objective is returned.
    """
    _check_weights(gamma, mu)
    opts = opts or HyperParams.from_config(gamma=gamma, mu=mu)
    logger.info(
        f"partial-observation descent: n={data.n}, p={data.p}, T={data.horizon}, "
        f"gamma={gamma}, mu={mu}, restarts={opts.restarts}"
    )
    best_point, best_report = _descend(
        DecisionPoint.zeros(data.n, data.horizon), data, gamma, mu, opts
    )
    rng = np.random.default_rng(opts.seed)
    for restart in range(opts.restarts):
        start = _restart_point(data, gamma, mu, rng)
        point, report = _descend(start, data, gamma, mu, opts)
        logger.debug(f"restart {restart + 1}: J={report.objectives[-1]:.12g}")
        if report.objectives[-1] < best_report.objectives[-1]:
            best_point, best_report = point, report
    best_report.extras["restarts"] = opts.restarts
    logger.info(
        f"partial-observation descent stopped ({best_report.termination.value}) after "
        f"{best_report.iterations} iterations, |DJ|={best_report.grad_norms[-1]:.3e}"
    )
    return best_point, best_report
