"""
Identification of A from a fully observed trajectory.

With S = Σ_{t<T} x_t x_t* and P = Σ_{t<T} x_{t+1} x_t*:

* least squares      A = P S^{-1}
* ridge              A^γ = P (I/γ + S)^{-1}, minimizer of ½tr(AA*) + (γ/2)Σ|x_{t+1} - A x_t|²
* dual coefficients  (I/γ + K) p = -x_{+}, K_ts = x_t·x_s, and A^γ = -Σ p_{t+1} x_t*
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from data_types.errors import InvalidParameterError, RankDeficientDataError
from data_types.methods import StepRule, TerminationReason
from data_types.model import HyperParams, Trajectory
from data_types.results import DescentReport, DualCoefficients, RidgeState
from handlers.base import load_section
from services.linalg import (
    DEFAULT_RANK_TOL,
    as_square,
    as_vector,
    frobenius,
    numerical_rank,
    spd_solve,
    spd_solve_right,
    symmetrize,
)
from utils.logger import Logger

logger = Logger(__name__)


def _check_gamma(gamma: float) -> float:
    if not gamma > 0:
        raise InvalidParameterError(f"gamma must be > 0, got {gamma}")
    return float(gamma)


def _regularized_gram(trajectory: Trajectory, gamma: float) -> NDArray:
    return np.eye(trajectory.n) / gamma + trajectory.gram()


def least_squares(
    trajectory: Trajectory, rank_tol: float = DEFAULT_RANK_TOL
) -> NDArray:
    """
    Unpenalized fit A = P S^{-1}.

    Raises:
        RankDeficientDataError: S is numerically singular; the error carries its rank.
    """
    gram = trajectory.gram()
    rank = numerical_rank(gram, rank_tol)
    if rank < trajectory.n:
        logger.error(f"least squares rejected: Gram matrix rank {rank} < n={trajectory.n}")
        raise RankDeficientDataError(rank, trajectory.n)
    return spd_solve_right(trajectory.cross(), gram)


def ridge(trajectory: Trajectory, gamma: float) -> NDArray:
    """Penalized fit A^γ = P (I/γ + S)^{-1}; always well posed for γ > 0."""
    gamma = _check_gamma(gamma)
    return spd_solve_right(trajectory.cross(), _regularized_gram(trajectory, gamma))


def dual_value(states: ArrayLike, coefficients: ArrayLike, gamma: float) -> float:
    """
    K_γ(q) = 1/(2γ)Σ|q_t|² + ½Σ_{t,s} (x_t·x_s)(q_s·q_t) + Σ x_{t+1}·q_t.

    `states` is x_1..x_T row-stacked and `coefficients` is q_1..q_{T-1}.
    """
    states = np.asarray(states, dtype=float)
    q = np.asarray(coefficients, dtype=float)
    kernel = states[:-1] @ states[:-1].T
    return float(
        np.sum(q**2) / (2.0 * gamma)
        + 0.5 * np.sum(kernel * (q @ q.T))
        + np.sum(states[1:] * q)
    )


def dual_solve(
    trajectory: Trajectory, gamma: float
) -> tuple[DualCoefficients, float]:
    """
    Solves (I/γ + K) p = -[x_2; ...; x_T] for the dual coefficients p_2..p_T.

    The (T-1)n-dimensional system is block-diagonal across state coordinates,
    so it reduces to one (T-1)×(T-1) kernel solve with n right-hand sides.

    Returns:
        tuple: (DualCoefficients, K_γ(p))
    """
    gamma = _check_gamma(gamma)
    regressors = trajectory.regressors
    kernel = regressors @ regressors.T
    system = np.eye(trajectory.horizon - 1) / gamma + kernel
    vectors = spd_solve(system, -trajectory.successors)
    value = dual_value(trajectory.states, vectors, gamma)
    return DualCoefficients(vectors, gamma), value


def reconstruct_from_dual(
    trajectory: Trajectory, coefficients: DualCoefficients
) -> NDArray:
    """A = -Σ p_{t+1} x_t*."""
    return -coefficients.vectors.T @ trajectory.regressors


def objective_and_gradient(
    A: ArrayLike, trajectory: Trajectory, gamma: float
) -> tuple[float, NDArray]:
    """
    J(A) = ½tr(AA*) + (γ/2)Σ|x_{t+1} - A x_t|² and DJ(A) = A(I + γS) - γP.
    """
    A = as_square(A, "A")
    residuals = trajectory.successors - trajectory.regressors @ A.T
    value = 0.5 * np.sum(A**2) + 0.5 * gamma * np.sum(residuals**2)
    gradient = A + gamma * (A @ trajectory.gram() - trajectory.cross())
    return float(value), gradient


def step_bound(trajectory: Trajectory, gamma: float) -> float:
    """
    Upper end of the admissible fixed-step interval 0 < ρ < 2/(1 + γΣ|x_t|²).

    The printed lower end "2 <" of that interval is infeasible; the descent
    argument needs -1 + (ρ/2)(1 + γΣ|x_t|²) < 0, which is what is used here.
    """
    return 2.0 / (1.0 + gamma * float(np.sum(trajectory.regressors**2)))


def _fixed_step(trajectory: Trajectory, gamma: float, opts: HyperParams) -> float:
    if opts.step is not None:
        return float(opts.step)
    rule = opts.step_rule or StepRule.FIXED
    if rule is StepRule.FIXED:
        return 0.5 * step_bound(trajectory, gamma)
    if rule is StepRule.LIPSCHITZ:
        largest = float(np.linalg.eigvalsh(trajectory.gram())[-1])
        return 1.0 / (1.0 + gamma * largest)
    raise InvalidParameterError(f"step rule {rule.value} is not available for full observation")


def gradient_descent(
    trajectory: Trajectory,
    gamma: float,
    opts: Optional[HyperParams] = None,
    initial: Optional[ArrayLike] = None,
) -> tuple[NDArray, DescentReport]:
    """
    Fixed-step descent A^{n+1} = A^n - ρ DJ(A^n) from A^1 = 0.

    Stops when ||DJ||_F <= grad_tol. Running out of iterations and an
    objective increase (step above the admissible bound) are reported through
    the termination reason, never raised.
    """
    gamma = _check_gamma(gamma)
    opts = opts or HyperParams.from_config(gamma=gamma)
    slack = float(load_section("NUMERICS").get("divergence_slack", 1e-12))
    step = _fixed_step(trajectory, gamma, opts)
    bound = step_bound(trajectory, gamma)

    A = np.zeros((trajectory.n, trajectory.n)) if initial is None else as_square(initial, "initial")
    value, gradient = objective_and_gradient(A, trajectory, gamma)
    report = DescentReport(extras={"step_bound": bound, "step": step})
    report.record(value, frobenius(gradient))
    logger.info(
        f"gradient descent: n={trajectory.n}, T={trajectory.horizon}, gamma={gamma}, "
        f"step={step:.6g} (bound {bound:.6g})"
    )
    if step >= bound:
        logger.warning(f"step {step:.6g} is outside the admissible interval (0, {bound:.6g})")

    report.termination = TerminationReason.MAX_ITERS
    for iteration in range(opts.max_iters):
        if report.grad_norms[-1] <= opts.grad_tol:
            report.termination = TerminationReason.CONVERGED
            break
        candidate = A - step * gradient
        new_value, new_gradient = objective_and_gradient(candidate, trajectory, gamma)
        report.steps.append(step)
        report.record(new_value, frobenius(new_gradient))
        logger.debug(f"iteration {iteration + 1}: J={new_value:.17g}")
        increased = new_value > value + slack * (1.0 + abs(value))
        A, value, gradient = candidate, new_value, new_gradient
        if increased or not np.isfinite(new_value):
            report.diverged = True
            report.termination = TerminationReason.DIVERGED
            logger.warning(f"objective increased at iteration {iteration + 1}: step too large")
            break
    else:
        if report.grad_norms[-1] <= opts.grad_tol:
            report.termination = TerminationReason.CONVERGED

    report.final_iterate = A
    logger.info(
        f"gradient descent stopped ({report.termination.value}) after "
        f"{report.iterations} iterations, |DJ|={report.grad_norms[-1]:.3e}"
    )
    return A, report


def ridge_state(trajectory: Trajectory, gamma: float) -> RidgeState:
    """Batch construction of B_T = (I/γ + S)^{-1} and A_T = P B_T."""
    gamma = _check_gamma(gamma)
    gram = trajectory.gram()
    gain = spd_solve(np.eye(trajectory.n) / gamma + gram, np.eye(trajectory.n))
    cross = trajectory.cross()
    return RidgeState(
        horizon=trajectory.horizon,
        gain=symmetrize(gain),
        estimate=cross @ gain,
        gamma=gamma,
        gram=gram,
        cross=cross,
    )


def recursive_update(
    state: RidgeState,
    x_current: ArrayLike,
    x_next: ArrayLike,
    refresh_every: Optional[int] = None,
) -> RidgeState:
    """
    Extends the ridge estimate by the transition x_T -> x_{T+1}.

    B_{T+1} follows from B_T by the Sherman–Morrison rank-one formula for
    (B_{T+1})^{-1} = (B_T)^{-1} + x_T x_T*, and
    A_{T+1} = A_T + (x_{T+1} - A_T x_T) x_T* B_{T+1}.
    Every `refresh_every` updates the gain is refactorized from the raw sums.
    """
    n = state.gain.shape[0]
    x_current = as_vector(x_current, "x_current", size=n)
    x_next = as_vector(x_next, "x_next", size=n)
    if refresh_every is None:
        refresh_every = int(load_section("NUMERICS").get("sherman_morrison_refresh", 64))

    gain_x = state.gain @ x_current
    gain = symmetrize(
        state.gain - np.outer(gain_x, gain_x) / (1.0 + x_current @ gain_x)
    )
    innovation = x_next - state.estimate @ x_current
    estimate = state.estimate + np.outer(innovation, gain @ x_current)
    gram = state.gram + np.outer(x_current, x_current)
    cross = state.cross + np.outer(x_next, x_current)

    updates = state.updates_since_refresh + 1
    if updates >= refresh_every:
        gain = symmetrize(spd_solve(np.eye(n) / state.gamma + gram, np.eye(n)))
        estimate = cross @ gain
        updates = 0
        logger.debug(f"refactorized ridge gain at horizon {state.horizon + 1}")

    return RidgeState(
        horizon=state.horizon + 1,
        gain=gain,
        estimate=estimate,
        gamma=state.gamma,
        gram=gram,
        cross=cross,
        updates_since_refresh=updates,
    )


def neumann_expansion(
    trajectory: Trajectory,
    gamma: float,
    order: int,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> NDArray:
    """
    Truncated large-γ series LS · (I + Σ_{j=1..order} (-1)^j γ^{-j} S^{-j}).

    The truncation error against `ridge` is O(γ^{-(order+1)}).
    """
    gamma = _check_gamma(gamma)
    if order < 0:
        raise InvalidParameterError(f"order must be >= 0, got {order}")
    base = least_squares(trajectory, rank_tol)
    gram = trajectory.gram()
    term = np.eye(trajectory.n)
    series = term.copy()
    for _ in range(order):
        term = -spd_solve_right(term, gram) / gamma
        series = series + term
    return base @ series


@dataclass(frozen=True)
class MinNormDiagnostics:
    """Ridge path along increasing γ against the minimum-norm consistent matrix."""

    gammas: list[float]
    estimates: list[NDArray]
    minimum_norm: NDArray
    distances: list[float]
    norms: list[float]
    consistency_residual: float
    extras: dict = field(default_factory=dict)

    @property
    def distances_non_increasing(self) -> bool:
        return bool(np.all(np.diff(self.distances) <= 1e-12))

    def to_dict(self) -> dict:
        return {
            "gammas": list(self.gammas),
            "estimates": [estimate.tolist() for estimate in self.estimates],
            "minimum_norm": self.minimum_norm.tolist(),
            "distances": list(self.distances),
            "norms": list(self.norms),
            "consistency_residual": self.consistency_residual,
            "distances_non_increasing": self.distances_non_increasing,
        }


def minimum_norm_consistent(
    trajectory: Trajectory, rank_tol: float = DEFAULT_RANK_TOL
) -> NDArray:
    """Ā_mn = P S⁺, the smallest-Frobenius-norm Ā with x_{t+1} = Ā x_t on consistent data."""
    return trajectory.cross() @ np.linalg.pinv(
        trajectory.gram(), rcond=rank_tol, hermitian=True
    )


def min_norm_limit(
    trajectory: Trajectory,
    gammas: list[float],
    rank_tol: float = DEFAULT_RANK_TOL,
) -> MinNormDiagnostics:
    """Evaluates the ridge path on a sorted γ grid and its distance to Ā_mn."""
    grid = sorted(_check_gamma(gamma) for gamma in gammas)
    target = minimum_norm_consistent(trajectory, rank_tol)
    residual = frobenius(trajectory.successors - trajectory.regressors @ target.T)
    if residual > 1e-8 * (1.0 + frobenius(trajectory.successors)):
        logger.warning(f"trajectory is not consistent with a linear map (residual {residual:.3e})")
    estimates = [ridge(trajectory, gamma) for gamma in grid]
    return MinNormDiagnostics(
        gammas=grid,
        estimates=estimates,
        minimum_norm=target,
        distances=[frobenius(estimate - target) for estimate in estimates],
        norms=[frobenius(estimate) for estimate in estimates],
        consistency_residual=residual,
    )
