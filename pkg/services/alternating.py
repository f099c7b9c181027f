"""
Alternating minimization of J(A, x(.)) = ½tr(AA*) + (γ/2)Σ|x_{t+1} - A x_t|² + (μ/2)Σ|y_t - C x_t|².

Each sweep minimizes exactly in the states (Riccati smoother for the current A)
and then in A, with an optional proximal term (ρ/2)|A - A^n|²_F:

    A^{n+1} = ((ρ/γ)A^n + Σx_{t+1}x_t*) ((ρ+1)/γ I + Σx_t x_t*)^{-1}.

One sweep lowers J by exactly

    (ρ+½)|ΔA|² + (γ/2)Σ|ΔA x^n_t|² + (γ/2)Σ|Δx_{t+1} - A^{n+1}Δx_t|² + (μ/2)Σ|CΔx_t|²

with ΔA = A^{n+1} - A^n and Δx = x^n - x^{n+1}; the report keeps every term.
"""
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from data_types.errors import DimensionMismatchError, InvalidParameterError
from data_types.methods import TerminationReason
from data_types.model import HyperParams, ObservedData
from data_types.results import AltMinState, DescentReport
from handlers.base import load_section
from services.linalg import (
    DEFAULT_RANK_TOL,
    as_matrix,
    as_square,
    numerical_rank,
    spd_solve_right,
)
from services.partial_observation import (
    lift_estimator,
    objective_in_states,
    stationarity_residual,
)
from services.smoother import SmootherSolution, smoother_solve
from utils.logger import Logger

logger = Logger(__name__)


def minimize_Kx(A: ArrayLike, data: ObservedData, gamma: float, mu: float) -> NDArray:
    """States x_1..x_T minimizing K_x(A, ·) with x_1 = x, row-stacked."""
    return smoother_solve(A, data, gamma, mu).states


def update_A(
    A_prev: ArrayLike, states: ArrayLike, gamma: float, rho: float = 0.0
) -> NDArray:
    """
    Minimizer of ½tr(AA*) + (ρ/2)|A - A_prev|² + (γ/2)Σ|x_{t+1} - A x_t|².

    With ρ = 0 this is the ridge estimate on the given states.
    """
    if not gamma > 0:
        raise InvalidParameterError(f"gamma must be > 0, got {gamma}")
    if not rho >= 0:
        raise InvalidParameterError(f"rho must be >= 0, got {rho}")
    A_prev = as_square(A_prev, "A_prev")
    states = as_matrix(states, "states", shape=(None, A_prev.shape[0]))
    regressors, successors = states[:-1], states[1:]
    gram = regressors.T @ regressors
    cross = successors.T @ regressors
    n = A_prev.shape[0]
    return spd_solve_right(
        (rho / gamma) * A_prev + cross, (rho + 1.0) / gamma * np.eye(n) + gram
    )


def _initial_transition(
    data: ObservedData, gamma: float, rank_tol: float
) -> NDArray:
    if numerical_rank(data.C, rank_tol) == data.p:
        return lift_estimator(data, gamma, rank_tol)
    logger.debug("C has dependent rows; starting from A = 0")
    return np.zeros((data.n, data.n))


def _ledger_entry(
    previous: AltMinState,
    current: AltMinState,
    data: ObservedData,
    gamma: float,
    mu: float,
    rho: float,
) -> dict:
    delta_A = current.A - previous.A
    delta_x = previous.states - current.states
    prox = (rho + 0.5) * float(np.sum(delta_A**2))
    fit = 0.5 * gamma * float(np.sum((previous.states[:-1] @ delta_A.T) ** 2))
    dynamics = 0.5 * gamma * float(
        np.sum((delta_x[1:] - delta_x[:-1] @ current.A.T) ** 2)
    )
    observation = 0.5 * mu * float(np.sum((delta_x[1:] @ data.C.T) ** 2))
    drop = previous.objective - current.objective
    predicted = prox + fit + dynamics + observation
    return {
        "objective_drop": drop,
        "proximal": prox,
        "transition_fit": fit,
        "dynamics": dynamics,
        "observation": observation,
        "balance_gap": drop - predicted,
    }


def _state(
    A: NDArray, solution: SmootherSolution, data: ObservedData, gamma: float, mu: float
) -> AltMinState:
    return AltMinState(
        A,
        solution.states,
        solution.adjoints.vectors,
        objective_in_states(A, solution.states, data, gamma, mu),
    )


def _norms(state: AltMinState) -> tuple[float, float, float]:
    return (
        float(np.linalg.norm(state.A)),
        float(np.max(np.linalg.norm(state.states, axis=1))),
        float(np.max(np.linalg.norm(state.adjoints, axis=1))),
    )


def alternate(
    data: ObservedData,
    gamma: float,
    mu: float,
    rho: Optional[float] = None,
    opts: Optional[HyperParams] = None,
    initial: Optional[ArrayLike] = None,
) -> tuple[NDArray, NDArray, NDArray, DescentReport]:
    """
    Runs the alternating scheme from A¹ (the lift estimate when C has full row
    rank, otherwise 0, unless `initial` is given).

    Stops once max(|A^{n+1} - A^n|_F, stationarity residual) <= grad_tol, or
    after max_iters sweeps. `report.steps` holds |A^{n+1} - A^n|_F per sweep,
    `report.grad_norms` the stationarity residual of each iterate and
    `report.ledger` the per-sweep objective accounting.

    Returns:
        tuple: (A, states x_1..x_T, adjoints p_1..p_T, report)
    """
    opts = opts or HyperParams.from_config(gamma=gamma, mu=mu, rho=rho)
    rho = opts.rho if rho is None else float(rho)
    if not rho >= 0:
        raise InvalidParameterError(f"rho must be >= 0, got {rho}")
    numerics = load_section("NUMERICS")
    rank_tol = float(numerics.get("rank_tol", DEFAULT_RANK_TOL))
    slack = float(numerics.get("divergence_slack", 1e-12))

    if initial is None:
        A = _initial_transition(data, gamma, rank_tol)
    else:
        A = as_square(initial, "initial")
        if A.shape[0] != data.n:
            raise DimensionMismatchError(f"initial A must be {data.n}x{data.n}, got {A.shape}")
    logger.info(
        f"alternating minimization: n={data.n}, p={data.p}, T={data.horizon}, "
        f"gamma={gamma}, mu={mu}, rho={rho}"
    )

    state = _state(A, smoother_solve(A, data, gamma, mu), data, gamma, mu)
    residual = stationarity_residual(state.A, state.states, state.adjoints, data, gamma, mu)
    report = DescentReport(extras={"rho": rho})
    report.record(state.objective, residual)
    norms = [_norms(state)]

    report.termination = TerminationReason.MAX_ITERS
    change = 0.0
    for sweep in range(opts.max_iters):
        if max(change, residual) <= opts.grad_tol:
            report.termination = TerminationReason.CONVERGED
            break
        A_next = update_A(state.A, state.states, gamma, rho)
        following = _state(A_next, smoother_solve(A_next, data, gamma, mu), data, gamma, mu)
        report.ledger.append(_ledger_entry(state, following, data, gamma, mu, rho))

        change = float(np.linalg.norm(A_next - state.A))
        residual = stationarity_residual(
            following.A, following.states, following.adjoints, data, gamma, mu
        )
        if following.objective > state.objective + slack * (1.0 + abs(state.objective)):
            logger.warning(
                f"objective rose at sweep {sweep + 1}: "
                f"{state.objective:.17g} -> {following.objective:.17g}"
            )
        logger.debug(
            f"sweep {sweep + 1}: J={following.objective:.12g}, "
            f"|dA|={change:.3e}, residual={residual:.3e}"
        )
        state = following
        report.steps.append(change)
        report.record(state.objective, residual)
        norms.append(_norms(state))
    else:
        if max(change, residual) <= opts.grad_tol:
            report.termination = TerminationReason.CONVERGED

    report.final_iterate = state
    report.extras["stationarity_residual"] = residual
    report.extras["A_norms"] = [entry[0] for entry in norms]
    report.extras["state_norms"] = [entry[1] for entry in norms]
    report.extras["adjoint_norms"] = [entry[2] for entry in norms]
    logger.info(
        f"alternating minimization stopped ({report.termination.value}) after "
        f"{report.iterations} sweeps, J={state.objective:.12g}, residual={residual:.3e}"
    )
    return state.A, state.states, state.adjoints, report


def dual_control_step(
    A_n: ArrayLike, data: ObservedData, gamma: float, mu: float
) -> NDArray:
    """
    Experimental update A_{n+1} = -Σ p^n_{t+1}(x^n_t)*, with x^n the smoothed
    states for A_n and p^n the optimal state of the dual control problem
    (the smoother adjoint). No convergence is claimed for the iteration.
    """
    solution = smoother_solve(A_n, data, gamma, mu)
    adjoints = solution.adjoints.vectors
    return -adjoints[1:].T @ solution.states[:-1]


def dual_control_step_from_residuals(
    A_n: ArrayLike, data: ObservedData, gamma: float, mu: float
) -> NDArray:
    """Same update written as γΣ(x^n_{t+1} - A_n x^n_t)(x^n_t)*."""
    A_n = as_square(A_n, "A_n")
    states = minimize_Kx(A_n, data, gamma, mu)
    defects = states[1:] - states[:-1] @ A_n.T
    return gamma * defects.T @ states[:-1]


def dual_control_costates(
    A: ArrayLike, controls: ArrayLike, data: ObservedData, mu: float
) -> NDArray:
    """
    Backward dynamics driven by z_2..z_T (row-stacked):

        q_T = -μC*y_T + C*z_T,  q_t = A*q_{t+1} - μC*y_t + C*z_t,  q_1 = A*q_2.
    """
    A = as_square(A, "A")
    controls = as_matrix(controls, "controls", shape=(data.horizon - 1, data.p))
    forcing = (controls - mu * data.observations) @ data.C
    costates = np.zeros((data.horizon, data.n))
    costates[-1] = forcing[-1]
    for k in range(data.horizon - 2, 0, -1):
        costates[k] = A.T @ costates[k + 1] + forcing[k - 1]
    costates[0] = A.T @ costates[1]
    return costates


def dual_control_objective(
    A: ArrayLike, controls: ArrayLike, data: ObservedData, gamma: float, mu: float
) -> float:
    """
    -q_1·x + (1/2γ)Σ_{t>=2}|q_t|² + (1/2μ)Σ|z_t|², minimized by z_t = μC x̂_t
    where its costates coincide with the smoother adjoint.
    """
    if not gamma > 0 or not mu > 0:
        raise InvalidParameterError(f"gamma and mu must be > 0, got {gamma}, {mu}")
    costates = dual_control_costates(A, controls, data, mu)
    controls = np.asarray(controls, dtype=float).reshape(data.horizon - 1, data.p)
    return float(
        -costates[0] @ data.x
        + 0.5 / gamma * np.sum(costates[1:] ** 2)
        + 0.5 / mu * np.sum(controls**2)
    )
