"""
Realization theory: Markov parameters, block Hankel matrices, observability and
controllability, Silverman's rank test and a minimal-realization extractor.

The extractor is the balanced SVD form of Ho's algorithm: the Hankel matrix
H_{n+1,n} = O_{n+1} C_n is factored as U S V*, truncated to rank n, and split
as O = U_n S_n^{1/2}, C = S_n^{1/2} V_n*. C and B are the first block row and
column; A solves the shift relation O[:-p] A = O[p:] in the least-squares sense.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from data_types.errors import (
    InconsistentOrderError,
    InsufficientDataError,
    InvalidParameterError,
)
from data_types.model import ImpulseResponse, SystemRealization
from services.linalg import DEFAULT_RANK_TOL, numerical_rank
from utils.logger import Logger

logger = Logger(__name__)

DEFAULT_SHIFTS = 3


@dataclass(frozen=True)
class SilvermanResult:
    """
    Outcome of the rank-stabilization test.

    `order` is None when the ranks never stabilized up to the tested depth;
    `ranks[r-1]` is rank H_{r,r}, and `diagnostics` lists every tested depth.
    """

    order: Optional[int]
    ranks: list[int]
    diagnostics: list[dict] = field(default_factory=list)

    @property
    def stabilized(self) -> bool:
        return self.order is not None

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "stabilized": self.stabilized,
            "ranks": list(self.ranks),
            "diagnostics": list(self.diagnostics),
        }


def markov_params(system: SystemRealization, count: int) -> ImpulseResponse:
    """G_0 = 0 and G_t = C A^{t-1} B for t = 1..count."""
    if int(count) < 1:
        raise InvalidParameterError(f"count must be >= 1, got {count}")
    blocks = np.zeros((int(count) + 1, system.p, system.m))
    power_b = system.B.copy()
    for t in range(1, int(count) + 1):
        blocks[t] = system.C @ power_b
        power_b = system.A @ power_b
    return ImpulseResponse(blocks)


def hankel(response: ImpulseResponse, rows: int, cols: int) -> NDArray:
    """Block Hankel matrix whose block (i, j) is G_{i+j-1}; shape (rows·p, cols·m)."""
    if rows < 1 or cols < 1:
        raise InvalidParameterError(f"Hankel depths must be >= 1, got ({rows}, {cols})")
    needed = rows + cols - 1
    if response.count < needed:
        raise InsufficientDataError(
            f"H_{{{rows},{cols}}} needs G_1..G_{needed}, only G_1..G_{response.count} available"
        )
    return np.block(
        [[response.block(i + j + 1) for j in range(cols)] for i in range(rows)]
    )


def structure_matrices(
    system: SystemRealization, rows: int, cols: int
) -> tuple[NDArray, NDArray]:
    """
    Observability and controllability matrices of a realization.

    Returns:
        tuple: ([C; CA; ...; CA^{rows-1}], [B, AB, ..., A^{cols-1}B])
    """
    if rows < 1 or cols < 1:
        raise InvalidParameterError(f"depths must be >= 1, got ({rows}, {cols})")
    observability = [system.C]
    for _ in range(rows - 1):
        observability.append(observability[-1] @ system.A)
    controllability = [system.B]
    for _ in range(cols - 1):
        controllability.append(system.A @ controllability[-1])
    return np.vstack(observability), np.hstack(controllability)


def is_minimal(system: SystemRealization, rank_tol: float = DEFAULT_RANK_TOL) -> bool:
    """Kalman test: (A, B) controllable and (A, C) observable."""
    observability, controllability = structure_matrices(system, system.n, system.n)
    return (
        numerical_rank(observability, rank_tol) == system.n
        and numerical_rank(controllability, rank_tol) == system.n
    )


def silverman_order(
    response: ImpulseResponse,
    max_depth: int,
    rank_tol: float = DEFAULT_RANK_TOL,
    shifts: int = DEFAULT_SHIFTS,
) -> SilvermanResult:
    """
    Smallest ρ with rank H_{r,r} = rank H_{r+1,r+j} = ρ for j = 1..shifts.

    Depths r = 1..max_depth are tested in order; the result carries the rank
    trail so a non-stabilized sequence can be inspected.
    """
    if not rank_tol > 0:
        raise InvalidParameterError(f"rank_tol must be > 0, got {rank_tol}")
    if max_depth < 1 or shifts < 1:
        raise InvalidParameterError("max_depth and shifts must be >= 1")
    needed = 2 * max_depth + shifts
    if response.count < needed:
        raise InsufficientDataError(
            f"Silverman test to depth {max_depth} needs G_1..G_{needed}, "
            f"only G_1..G_{response.count} available"
        )

    ranks, diagnostics = [], []
    for depth in range(1, max_depth + 1):
        rank = numerical_rank(hankel(response, depth, depth), rank_tol)
        shifted = [
            numerical_rank(hankel(response, depth + 1, depth + j), rank_tol)
            for j in range(1, shifts + 1)
        ]
        ranks.append(rank)
        diagnostics.append({"depth": depth, "rank": rank, "shifted_ranks": shifted})
        if all(value == rank for value in shifted):
            logger.info(f"Hankel ranks stabilized at depth {depth}: order {rank}")
            return SilvermanResult(rank, ranks, diagnostics)

    logger.warning(f"Hankel ranks not stabilized up to depth {max_depth}: {ranks}")
    return SilvermanResult(None, ranks, diagnostics)


def minimal_realization(
    response: ImpulseResponse, order: int, rank_tol: float = DEFAULT_RANK_TOL
) -> SystemRealization:
    """
    Balanced realization of state dimension `order` from G_1..G_{2·order}.

    Raises:
        InconsistentOrderError: the Hankel matrix has numerical rank below `order`.
    """
    if order < 1:
        raise InvalidParameterError(f"order must be >= 1, got {order}")
    if response.count < 2 * order:
        raise InsufficientDataError(
            f"order {order} needs G_1..G_{2 * order}, only G_1..G_{response.count} available"
        )
    p, m = response.p, response.m
    matrix = hankel(response, order + 1, order)
    U, s, Vt = linalg.svd(matrix, full_matrices=False)
    rank = numerical_rank(matrix, rank_tol)
    if rank < order:
        logger.error(f"Hankel rank {rank} below requested order {order}")
        raise InconsistentOrderError(rank, order)

    root = np.sqrt(s[:order])
    observability = U[:, :order] * root
    controllability = root[:, None] * Vt[:order]
    C = observability[:p]
    B = controllability[:, :m]
    A = linalg.lstsq(observability[:-p], observability[p:])[0]
    logger.info(f"realized order {order} system from {response.count} Markov blocks")
    return SystemRealization(A, B, C)
