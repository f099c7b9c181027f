"""Synthetic data for the autonomous system x_{t+1} = A x_t, y_t = C x_t."""
import numpy as np
from numpy.typing import ArrayLike

from data_types.errors import DimensionMismatchError
from data_types.model import ObservedData, Trajectory
from services.linalg import as_matrix, as_square, as_vector
from utils.logger import Logger

logger = Logger(__name__)


def simulate_full(A: ArrayLike, x: ArrayLike, horizon: int) -> Trajectory:
    """
    Iterates x_{t+1} = A x_t from x_1 = x for t = 1..T-1.

    Args:
        A (ArrayLike): n×n transition matrix.
        x (ArrayLike): initial state, length n.
        horizon (int): T >= 2.

    Returns:
        Trajectory: states x_1..x_T.
    """
    A = as_square(A, "A")
    x = as_vector(x, "x", size=A.shape[0])
    if int(horizon) < 2:
        raise DimensionMismatchError(f"horizon T must be >= 2, got {horizon}")

    states = np.empty((int(horizon), A.shape[0]))
    states[0] = x
    for t in range(1, int(horizon)):
        states[t] = A @ states[t - 1]
    logger.debug(f"simulated n={A.shape[0]} trajectory over T={horizon}")
    return Trajectory(states)


def simulate_observed(
    A: ArrayLike, C: ArrayLike, x: ArrayLike, horizon: int
) -> ObservedData:
    """Simulates the trajectory and keeps (x, C, y_2..y_T) with y_t = C x_t."""
    trajectory = simulate_full(A, x, horizon)
    C = as_matrix(C, "C", shape=(None, trajectory.n))
    observations = trajectory.successors @ C.T
    return ObservedData(trajectory.state(1), C, observations)
