"""
Large-γ behaviour of the partial-observation estimator with μ = γ on exact data
y_t = C x̄_t, x̄_t = Ā^{t-1}x.

Writing A^γ = Ā + A₁/γ + ..., x^γ = x̄ + x¹/γ + ..., p^γ = p⁰ + ..., the first
order terms solve

    x¹_{t+1} - Ā x¹_t - A₁ x̄_t + p⁰_{t+1} = 0,   x¹_1 = 0
    p⁰_t = Ā* p⁰_{t+1} + C*C x¹_t,               p⁰_T = C*C x¹_T
    Ā = -Σ_t p⁰_{t+1} x̄_t*

which the normalized Riccati gains (γ = μ = 1) decouple into x¹_t = r¹_t - Σ̂_t p⁰_t.
"""
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from data_types.errors import DegenerateExpansionError, InvalidParameterError
from data_types.methods import TerminationReason
from data_types.model import HyperParams, Trajectory
from data_types.results import ExpansionData
from handlers.base import load_section
from services.alternating import alternate
from services.full_observation import minimum_norm_consistent
from services.linalg import (
    DEFAULT_RANK_TOL,
    as_matrix,
    as_square,
    as_vector,
    frobenius,
    numerical_rank,
    spd_solve,
    spd_solve_right,
    symmetrize,
)
from services.simulation import simulate_full, simulate_observed
from utils.logger import Logger

logger = Logger(__name__)


def normalized_gains(Abar: ArrayLike, C: ArrayLike, horizon: int) -> ExpansionData:
    """
    Σ̂_1 = 0,  Σ̂_{t+1} = Ā(Σ̂_t - Σ̂_tC*(CΣ̂_tC* + I)^{-1}CΣ̂_t)Ā* + I,
    Γ_t = Ā(I - Σ̂_tC*(CΣ̂_tC* + I)^{-1}C),  Λ_t = C*(CΣ̂_tC* + I)^{-1}C.

    Φ(t, s) is available through `ExpansionData.phi`.
    """
    Abar = as_square(Abar, "Abar")
    n = Abar.shape[0]
    C = as_matrix(C, "C", shape=(None, n))
    if int(horizon) < 2:
        raise InvalidParameterError(f"horizon T must be >= 2, got {horizon}")
    horizon = int(horizon)
    identity_n, identity_p = np.eye(n), np.eye(C.shape[0])

    sigma = np.zeros((horizon, n, n))
    transitions = np.zeros((horizon, n, n))
    lam = np.zeros((horizon, n, n))
    for k in range(horizon):
        current = sigma[k]
        inner = C @ current @ C.T + identity_p
        weight = spd_solve(inner, C)
        transitions[k] = Abar @ (identity_n - current @ C.T @ weight)
        lam[k] = symmetrize(C.T @ weight)
        if k + 1 < horizon:
            sigma[k + 1] = symmetrize(
                Abar @ (current - current @ C.T @ weight @ current) @ Abar.T + identity_n
            )
    return ExpansionData(sigma, transitions, lam, Abar)


def correction_map(gains: ExpansionData, xbar: NDArray) -> NDArray:
    """
    Matrix of A₁ ↦ Σ_{t,σ=1}^{T-1} (Σ_{s=max(σ,t)}^{T-1} Φ*(s,t+1) Λ_{s+1} Φ(s,σ+1)) A₁ x̄_σ x̄_t*
    acting on row-major vec(A₁).
    """
    n, horizon = gains.Abar.shape[0], gains.horizon
    operator = np.zeros((n * n, n * n))
    for t in range(1, horizon):
        for sigma in range(1, horizon):
            weight = np.zeros((n, n))
            for s in range(max(sigma, t), horizon):
                weight += gains.phi(s, t + 1).T @ gains.lam[s] @ gains.phi(s, sigma + 1)
            # vec_r(M A N) = (M ⊗ N^T) vec_r(A)
            operator += np.kron(weight, np.outer(xbar[t - 1], xbar[sigma - 1]))
    return operator


def first_order_correction(
    Abar: ArrayLike,
    C: ArrayLike,
    x: ArrayLike,
    horizon: int,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> ExpansionData:
    """
    Solves for A₁, then r¹_1 = 0, r¹_{t+1} = Γ_t r¹_t + A₁x̄_t and
    p⁰_T = Λ_T r¹_T, p⁰_t = Γ_t* p⁰_{t+1} + Λ_t r¹_t.

    Raises:
        DegenerateExpansionError: the linear map for A₁ is singular.
    """
    gains = normalized_gains(Abar, C, horizon)
    Abar = gains.Abar
    n, horizon = Abar.shape[0], gains.horizon
    x = as_vector(x, "x", size=n)
    xbar = simulate_full(Abar, x, horizon).states

    operator = correction_map(gains, xbar)
    rank = numerical_rank(operator, rank_tol)
    if rank < n * n:
        logger.error(f"degenerate expansion: map for A1 has rank {rank} < {n * n}")
        raise DegenerateExpansionError(rank, n * n)
    A1 = np.linalg.solve(operator, -Abar.reshape(-1)).reshape(n, n)

    r1 = np.zeros((horizon, n))
    for k in range(horizon - 1):
        r1[k + 1] = gains.transitions[k] @ r1[k] + A1 @ xbar[k]
    p0 = np.zeros((horizon, n))
    p0[-1] = gains.lam[-1] @ r1[-1]
    for k in range(horizon - 2, -1, -1):
        p0[k] = gains.transitions[k].T @ p0[k + 1] + gains.lam[k] @ r1[k]

    logger.info(f"first-order correction solved: |A1|_F={frobenius(A1):.6g}")
    return ExpansionData(
        gains.sigma_hat, gains.transitions, gains.lam, Abar, xbar, A1, r1, p0
    )


def first_order_residuals(expansion: ExpansionData, C: ArrayLike) -> dict[str, float]:
    """Max-norm residual of each line of the first-order system at (A₁, x¹, p⁰)."""
    C = as_matrix(C, "C", shape=(None, expansion.Abar.shape[0]))
    Abar, A1, xbar, p0, x1 = (
        expansion.Abar,
        expansion.A1,
        expansion.xbar,
        expansion.p0,
        expansion.x1,
    )
    observed = C.T @ C
    dynamics = x1[1:] - x1[:-1] @ Abar.T - xbar[:-1] @ A1.T + p0[1:]
    adjoint = p0[1:-1] - p0[2:] @ Abar - x1[1:-1] @ observed.T
    return {
        "initial": float(np.linalg.norm(x1[0])),
        "dynamics": float(np.max(np.abs(dynamics))),
        "adjoint": float(np.max(np.abs(adjoint))) if adjoint.size else 0.0,
        "terminal": float(np.max(np.abs(p0[-1] - observed @ x1[-1]))),
        "transition": float(np.max(np.abs(Abar + p0[1:].T @ xbar[:-1]))),
    }


def expansion_residuals(
    expansion: ExpansionData, C: ArrayLike, gamma: float
) -> dict[str, float]:
    """
    Stationarity residuals of the γ-problem (μ = γ) at (Ā + A₁/γ, x̄ + x¹/γ, p⁰).

    The dynamics line decays like 1/γ²; the adjoint and transition lines,
    which would need the next-order adjoint, decay like 1/γ.
    """
    if not gamma > 0:
        raise InvalidParameterError(f"gamma must be > 0, got {gamma}")
    C = as_matrix(C, "C", shape=(None, expansion.Abar.shape[0]))
    A = expansion.Abar + expansion.A1 / gamma
    states = expansion.xbar + expansion.x1 / gamma
    adjoints = expansion.p0
    innovations = (expansion.xbar - states) @ C.T

    dynamics = states[1:] - states[:-1] @ A.T + adjoints[1:] / gamma
    adjoint = adjoints[1:-1] - adjoints[2:] @ A + gamma * innovations[1:-1] @ C
    terminal = adjoints[-1] + gamma * C.T @ innovations[-1]
    return {
        "dynamics": float(np.max(np.linalg.norm(dynamics, axis=1))),
        "adjoint": float(np.max(np.linalg.norm(adjoint, axis=1))) if adjoint.size else 0.0,
        "terminal": float(np.linalg.norm(terminal)),
        "transition": frobenius(A + adjoints[1:].T @ states[:-1]),
    }


def log_slopes(gammas: list[float], values: list[float]) -> list[float]:
    """Consecutive slopes of log(value) against log(γ); NaN where a value vanishes."""
    slopes = []
    for k in range(1, len(gammas)):
        if values[k] > 0 and values[k - 1] > 0:
            slopes.append(
                float(np.log(values[k] / values[k - 1]) / np.log(gammas[k] / gammas[k - 1]))
            )
        else:
            slopes.append(float("nan"))
    return slopes


def _reference_matrix(
    Abar: NDArray, C: NDArray, x: NDArray, horizon: int, rank_tol: float
) -> tuple[NDArray, str]:
    if numerical_rank(C, rank_tol) < Abar.shape[0]:
        return Abar, "supplied"
    observations = simulate_observed(Abar, C, x, horizon).observations
    recovered = np.linalg.lstsq(C, observations.T, rcond=None)[0].T
    trajectory = Trajectory(np.vstack([x, recovered]))
    return minimum_norm_consistent(trajectory, rank_tol), "minimum_norm"


def expansion_validation(
    Abar: ArrayLike,
    C: ArrayLike,
    x: ArrayLike,
    horizon: int,
    gamma_grid: list[float],
    opts: Optional[HyperParams] = None,
) -> dict:
    """
    Runs the alternating scheme with μ = γ on exact data for every γ of the grid
    and compares A^γ with the minimum-norm consistent matrix and γ(A^γ - Ā) with A₁.

    A γ where the inner solver stops without converging, or an expansion that
    turns out degenerate, becomes a diagnostic entry instead of an error.
    """
    grid = [float(gamma) for gamma in gamma_grid]
    if not grid or any(gamma <= 0 for gamma in grid):
        raise InvalidParameterError(f"gamma grid must be non-empty and positive, got {grid}")
    if any(later <= earlier for earlier, later in zip(grid, grid[1:])):
        raise InvalidParameterError(f"gamma grid must be increasing, got {grid}")
    Abar = as_square(Abar, "Abar")
    C = as_matrix(C, "C", shape=(None, Abar.shape[0]))
    x = as_vector(x, "x", size=Abar.shape[0])
    rank_tol = float(load_section("NUMERICS").get("rank_tol", DEFAULT_RANK_TOL))
    data = simulate_observed(Abar, C, x, horizon)

    diagnostics: dict = {"gammas": grid, "entries": [], "non_converged": []}
    try:
        expansion = first_order_correction(Abar, C, x, horizon, rank_tol)
        diagnostics["A1"] = expansion.A1.tolist()
    except DegenerateExpansionError as error:
        logger.warning(f"expansion unavailable: {error}")
        expansion = None
        diagnostics["A1"] = None
        diagnostics["degenerate_expansion"] = {"rank": error.rank, "size": error.size}

    reference, kind = _reference_matrix(Abar, C, x, horizon, rank_tol)
    diagnostics["reference"] = {"kind": kind, "matrix": reference.tolist()}
    if numerical_rank(C, rank_tol) == Abar.shape[0] == C.shape[0]:
        gram = Trajectory(simulate_full(Abar, x, horizon).states).gram()
        if numerical_rank(gram, rank_tol) == Abar.shape[0]:
            # ridge first order on the recovered states, reported for comparison only
            diagnostics["ridge_first_order"] = spd_solve_right(-Abar, gram).tolist()

    base = opts or HyperParams.from_config()
    scaled, gaps = [], []
    for gamma in grid:
        settings = base.with_(gamma=gamma, mu=gamma, rho=0.0)
        A, _, _, report = alternate(data, gamma, gamma, rho=0.0, opts=settings)
        deviation = gamma * (A - Abar)
        entry = {
            "gamma": gamma,
            "A": A.tolist(),
            "distance_to_reference": frobenius(A - reference),
            "scaled_deviation": deviation.tolist(),
            "termination": report.termination.value,
            "iterations": report.iterations,
            "stationarity_residual": report.extras["stationarity_residual"],
        }
        if expansion is not None:
            gap = frobenius(deviation - expansion.A1)
            entry["distance_to_A1"] = gap
            entry["relative_gap_to_A1"] = gap / max(frobenius(expansion.A1), 1e-300)
            entry["expansion_residuals"] = expansion_residuals(expansion, C, gamma)
            gaps.append(gap)
        if report.termination is not TerminationReason.CONVERGED:
            diagnostics["non_converged"].append(
                {"gamma": gamma, "termination": report.termination.value}
            )
        scaled.append(deviation)
        diagnostics["entries"].append(entry)

    distances = [entry["distance_to_reference"] for entry in diagnostics["entries"]]
    diagnostics["distances_non_increasing"] = bool(np.all(np.diff(distances) <= 1e-12))
    if len(grid) >= 2:
        last, previous = scaled[-1], scaled[-2]
        diagnostics["scaled_deviation_gap"] = frobenius(last - previous) / max(
            frobenius(last), 1e-300
        )
    if expansion is not None:
        diagnostics["slopes"] = {
            "A1_gap": log_slopes(grid, gaps),
            "dynamics_residual": log_slopes(
                grid,
                [entry["expansion_residuals"]["dynamics"] for entry in diagnostics["entries"]],
            ),
        }
    logger.info(
        f"expansion validation over {len(grid)} gammas, "
        f"{len(diagnostics['non_converged'])} without convergence"
    )
    return diagnostics
