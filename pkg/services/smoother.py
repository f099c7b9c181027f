"""
Riccati decoupling of the forward-backward Euler system of

    K_x(A, x_2..x_T) = (γ/2)Σ|x_{t+1} - A x_t|² + (μ/2)Σ_{t>=2}|y_t - C x_t|²,   x_1 = x.

The optimality system  x_{t+1} - A x_t + p_{t+1}/γ = 0,
p_t = A* p_{t+1} - μC*(y_t - C x_t),  p_T = -μC*(y_T - C x_T)
is split by x_t = r_t - Σ_t p_t into a forward pass for (Σ_t, r_t), which does
not depend on T, and a backward pass for p_t.
"""
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from data_types.errors import DimensionMismatchError, InvalidParameterError
from data_types.model import ObservedData
from data_types.results import AdjointSequence, SmootherGains
from services.linalg import as_square, spd_solve, spd_solve_right, symmetrize
from utils.logger import Logger

logger = Logger(__name__)


def _check_weights(gamma: float, mu: float) -> None:
    if not gamma > 0:
        raise InvalidParameterError(f"gamma must be > 0, got {gamma}")
    if not mu > 0:
        raise InvalidParameterError(f"mu must be > 0, got {mu}")


def _check_transition(A: ArrayLike, data: ObservedData) -> NDArray:
    A = as_square(A, "A")
    if A.shape[0] != data.n:
        raise DimensionMismatchError(f"A must be {data.n}x{data.n}, got {A.shape}")
    return A


@dataclass(frozen=True)
class SmootherSolution:
    """Minimizer x_1..x_T of K_x with its adjoints p_1..p_T and the gains used."""

    states: NDArray
    adjoints: AdjointSequence
    gains: SmootherGains


def riccati_gains(
    A: ArrayLike, data: ObservedData, gamma: float, mu: float
) -> SmootherGains:
    """
    Forward pass, Σ_1 = 0 and r_1 = x:

        Σ_{t+1} = AΣ_tA* + I/γ - AΣ_tC*(CΣ_tC* + I/μ)^{-1}CΣ_tA*
        r_{t+1} = A r_t + AΣ_tC*(CΣ_tC* + I/μ)^{-1}(y_t - C r_t)

    with y_1 := Cx. Σ_t is re-symmetrized after every step.
    """
    _check_weights(gamma, mu)
    A = _check_transition(A, data)
    n, p, horizon = data.n, data.p, data.horizon
    C = data.C
    observations = data.padded_observations()

    sigma = np.zeros((horizon, n, n))
    drift = np.zeros((horizon, n))
    drift[0] = data.x
    identity_n, identity_p = np.eye(n), np.eye(p)
    for k in range(horizon - 1):
        current = sigma[k]
        innovation_cov = C @ current @ C.T + identity_p / mu
        gain = spd_solve_right(A @ current @ C.T, innovation_cov)
        sigma[k + 1] = symmetrize(
            A @ current @ A.T + identity_n / gamma - gain @ C @ current @ A.T
        )
        drift[k + 1] = A @ drift[k] + gain @ (observations[k] - C @ drift[k])
    return SmootherGains(sigma, drift)


def apply_gain_inverse(
    C: NDArray, sigma: NDArray, mu: float, vector: NDArray
) -> NDArray:
    """
    (I + μC*CΣ)^{-1} v through I - C*(CΣC* + I/μ)^{-1}CΣ, which only needs an SPD solve.
    """
    inner = C @ sigma @ C.T + np.eye(C.shape[0]) / mu
    return vector - C.T @ spd_solve(inner, C @ sigma @ vector)


def smoother_solve(
    A: ArrayLike, data: ObservedData, gamma: float, mu: float
) -> SmootherSolution:
    """
    Backward pass p_T = -μ(I + μC*CΣ_T)^{-1}C*(y_T - C r_T),
    p_t = (I + μC*CΣ_t)^{-1}(A*p_{t+1} - μC*(y_t - C r_t)), then x_t = r_t - Σ_t p_t.
    """
    A = _check_transition(A, data)
    gains = riccati_gains(A, data, gamma, mu)
    C = data.C
    observations = data.padded_observations()
    horizon = data.horizon

    adjoints = np.zeros((horizon, data.n))
    last = horizon - 1
    adjoints[last] = apply_gain_inverse(
        C,
        gains.sigma[last],
        mu,
        -mu * C.T @ (observations[last] - C @ gains.drift[last]),
    )
    for k in range(horizon - 2, -1, -1):
        forcing = A.T @ adjoints[k + 1] - mu * C.T @ (
            observations[k] - C @ gains.drift[k]
        )
        adjoints[k] = apply_gain_inverse(C, gains.sigma[k], mu, forcing)

    states = gains.drift - np.einsum("tij,tj->ti", gains.sigma, adjoints)
    states[0] = data.x
    return SmootherSolution(states, AdjointSequence(adjoints), gains)


def kx_value(
    A: ArrayLike, states: ArrayLike, data: ObservedData, gamma: float, mu: float
) -> float:
    """K_x(A, x_2..x_T) for row-stacked states x_1..x_T (x_1 is taken as given)."""
    A = _check_transition(A, data)
    states = np.asarray(states, dtype=float)
    dynamics = states[1:] - states[:-1] @ A.T
    observation = data.observations - states[1:] @ data.C.T
    return float(0.5 * gamma * np.sum(dynamics**2) + 0.5 * mu * np.sum(observation**2))


def euler_residuals(
    A: ArrayLike,
    states: ArrayLike,
    adjoints: ArrayLike,
    data: ObservedData,
    gamma: float,
    mu: float,
) -> dict[str, float]:
    """
    Max-norm residuals of the Euler system for a given A:

    * initial:  |x_1 - x|
    * dynamics: |x_{t+1} - A x_t + p_{t+1}/γ|, t = 1..T-1
    * adjoint:  |p_t - A*p_{t+1} + μC*(y_t - C x_t)|, t = 2..T-1
    * terminal: |p_T + μC*(y_T - C x_T)|
    """
    A = _check_transition(A, data)
    states = np.asarray(states, dtype=float)
    adjoints = np.asarray(adjoints, dtype=float)
    C = data.C
    innovations = data.observations - states[1:] @ C.T

    dynamics = states[1:] - states[:-1] @ A.T + adjoints[1:] / gamma
    adjoint = adjoints[1:-1] - adjoints[2:] @ A + mu * innovations[:-1] @ C
    terminal = adjoints[-1] + mu * C.T @ innovations[-1]

    def largest(rows: NDArray) -> float:
        return float(np.max(np.linalg.norm(np.atleast_2d(rows), axis=-1))) if rows.size else 0.0

    return {
        "initial": float(np.linalg.norm(states[0] - data.x)),
        "dynamics": largest(dynamics),
        "adjoint": largest(adjoint),
        "terminal": float(np.linalg.norm(terminal)),
    }


def dense_euler_solve(
    A: ArrayLike, data: ObservedData, gamma: float, mu: float
) -> tuple[NDArray, NDArray]:
    """
    Reference solution of the Euler system by one dense solve.

    The normal equations of K_x in (x_2..x_T) are block-tridiagonal with
    diagonal blocks γI + γA*A + μC*C (γI + μC*C for the last one) and
    off-diagonal blocks -γA*, -γA. Adjoints follow from p_{t+1} = -γ(x_{t+1} - A x_t)
    and p_1 = A*p_2.
    """
    _check_weights(gamma, mu)
    A = _check_transition(A, data)
    n, horizon = data.n, data.horizon
    C = data.C
    unknowns = horizon - 1
    hessian = np.zeros((unknowns * n, unknowns * n))
    rhs = np.zeros(unknowns * n)
    for i in range(unknowns):
        block = slice(i * n, (i + 1) * n)
        hessian[block, block] = gamma * np.eye(n) + mu * C.T @ C
        if i < unknowns - 1:
            hessian[block, block] += gamma * A.T @ A
            following = slice((i + 1) * n, (i + 2) * n)
            hessian[block, following] = -gamma * A.T
            hessian[following, block] = -gamma * A
        rhs[block] = mu * C.T @ data.observations[i]
    rhs[:n] += gamma * A @ data.x

    solution = spd_solve(hessian, rhs).reshape(unknowns, n)
    states = np.vstack([data.x, solution])
    adjoints = np.zeros((horizon, n))
    adjoints[1:] = -gamma * (states[1:] - states[:-1] @ A.T)
    adjoints[0] = A.T @ adjoints[1]
    return states, adjoints
