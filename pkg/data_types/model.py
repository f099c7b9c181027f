from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from data_types.errors import DimensionMismatchError, InvalidParameterError
from data_types.methods import StepRule
from services.linalg import as_matrix, as_vector, frozen


@dataclass(frozen=True)
class Trajectory:
    """
    Fully observed state sequence x_1..x_T of the autonomous system.

    `states` is stored 0-based (row t-1 holds x_t); `state(t)` speaks the
    1-based time index used throughout the library.
    """

    states: NDArray

    def __post_init__(self) -> None:
        states = as_matrix(self.states, "states")
        if states.shape[0] < 2:
            raise DimensionMismatchError(
                f"a trajectory needs horizon T >= 2, got T={states.shape[0]}"
            )
        object.__setattr__(self, "states", frozen(states))

    @classmethod
    def from_states(cls, states: ArrayLike) -> "Trajectory":
        array = np.asarray(states, dtype=float)
        if array.ndim == 1:
            array = array.reshape(-1, 1)
        return cls(array)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def horizon(self) -> int:
        return self.states.shape[0]

    def state(self, t: int) -> NDArray:
        if not 1 <= t <= self.horizon:
            raise IndexError(f"t must be in 1..{self.horizon}, got {t}")
        return self.states[t - 1]

    @property
    def regressors(self) -> NDArray:
        """x_1..x_{T-1}, row-stacked."""
        return self.states[:-1]

    @property
    def successors(self) -> NDArray:
        """x_2..x_T, row-stacked."""
        return self.states[1:]

    def gram(self) -> NDArray:
        """Σ_{t<T} x_t x_t*."""
        return self.regressors.T @ self.regressors

    def cross(self) -> NDArray:
        """Σ_{t<T} x_{t+1} x_t*."""
        return self.successors.T @ self.regressors

    def truncated(self, horizon: int) -> "Trajectory":
        if not 2 <= horizon <= self.horizon:
            raise DimensionMismatchError(
                f"cannot truncate horizon {self.horizon} to {horizon}"
            )
        return Trajectory(self.states[:horizon])


@dataclass(frozen=True)
class ObservedData:
    """
    Partial observation (x_1, C, y_2..y_T) of the autonomous system.

    `observations` holds y_2..y_T row-stacked (row t-2 holds y_t).
    """

    x: NDArray
    C: NDArray
    observations: NDArray

    def __post_init__(self) -> None:
        x = as_vector(self.x, "x")
        C = as_matrix(self.C, "C", shape=(None, x.size))
        observations = np.asarray(self.observations, dtype=float)
        if observations.ndim == 1 and C.shape[0] == 1:
            observations = observations.reshape(-1, 1)
        observations = as_matrix(observations, "observations", shape=(None, C.shape[0]))
        object.__setattr__(self, "x", frozen(x))
        object.__setattr__(self, "C", frozen(C))
        object.__setattr__(self, "observations", frozen(observations))

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def horizon(self) -> int:
        return self.observations.shape[0] + 1

    def y(self, t: int) -> NDArray:
        if not 2 <= t <= self.horizon:
            raise IndexError(f"observations exist for t in 2..{self.horizon}, got {t}")
        return self.observations[t - 2]

    def padded_observations(self) -> NDArray:
        """y_1..y_T with y_1 := Cx, so the t=1 innovation vanishes."""
        return np.vstack([self.C @ self.x, self.observations])

    def observation_energy(self) -> float:
        """Σ_{t=2..T} |y_t|²."""
        return float(np.sum(self.observations**2))


@dataclass(frozen=True)
class HyperParams:
    """
    Tuning of every estimator and iterative scheme.

    `step` fixes the descent step when set; `step_rule` selects how the step
    is chosen otherwise (each algorithm has its own default when None).
    """

    gamma: float = 1.0
    mu: float = 1.0
    rho: float = 0.0
    max_iters: int = 50000
    grad_tol: float = 1e-9
    seed: int = 0
    step: Optional[float] = None
    step_rule: Optional[StepRule] = None
    restarts: int = 0

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise InvalidParameterError(f"gamma must be > 0, got {self.gamma}")
        if not self.mu > 0:
            raise InvalidParameterError(f"mu must be > 0, got {self.mu}")
        if not self.rho >= 0:
            raise InvalidParameterError(f"rho must be >= 0, got {self.rho}")
        if not self.grad_tol > 0:
            raise InvalidParameterError(f"grad_tol must be > 0, got {self.grad_tol}")
        if int(self.max_iters) < 1:
            raise InvalidParameterError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.step is not None and not self.step > 0:
            raise InvalidParameterError(f"step must be > 0, got {self.step}")
        if self.restarts < 0:
            raise InvalidParameterError(f"restarts must be >= 0, got {self.restarts}")
        if isinstance(self.step_rule, str):
            object.__setattr__(self, "step_rule", StepRule(self.step_rule))
        object.__setattr__(self, "max_iters", int(self.max_iters))

    @classmethod
    def from_config(cls, **overrides) -> "HyperParams":
        """Defaults from the HYPERPARAMS section of configs/config.yaml, then `overrides`."""
        from handlers.base import load_section

        values = load_section("HYPERPARAMS")
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)

    def with_(self, **changes) -> "HyperParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class SystemRealization:
    """Internal state realization (A, B, C) with dimensions (n, m, p)."""

    A: NDArray
    B: NDArray
    C: NDArray

    def __post_init__(self) -> None:
        A = as_matrix(self.A, "A")
        n = A.shape[0]
        A = as_matrix(A, "A", shape=(n, n))
        B = as_matrix(self.B, "B", shape=(n, None))
        C = as_matrix(self.C, "C", shape=(None, n))
        object.__setattr__(self, "A", frozen(A))
        object.__setattr__(self, "B", frozen(B))
        object.__setattr__(self, "C", frozen(C))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class ImpulseResponse:
    """Markov parameters G_0..G_N (each p×m), stacked as an array of shape (N+1, p, m)."""

    blocks: NDArray

    def __post_init__(self) -> None:
        blocks = np.asarray(self.blocks, dtype=float)
        if blocks.ndim != 3 or blocks.shape[0] < 1:
            raise DimensionMismatchError(
                f"impulse response blocks must have shape (N+1, p, m), got {blocks.shape}"
            )
        if not np.all(np.isfinite(blocks)):
            raise DimensionMismatchError("impulse response has non-finite entries")
        if np.any(blocks[0] != 0.0):
            raise InvalidParameterError("G_0 must be the zero matrix")
        object.__setattr__(self, "blocks", frozen(blocks))

    @classmethod
    def from_markov(cls, markov: list[ArrayLike]) -> "ImpulseResponse":
        """Builds G_0 = 0 followed by the given G_1..G_N."""
        stacked = np.array([as_matrix(G, f"G_{t + 1}") for t, G in enumerate(markov)])
        zero = np.zeros((1,) + stacked.shape[1:])
        return cls(np.concatenate([zero, stacked]))

    @classmethod
    def from_function(
        cls, markov: Callable[[int], ArrayLike], count: int
    ) -> "ImpulseResponse":
        return cls.from_markov([markov(t) for t in range(1, count + 1)])

    @property
    def p(self) -> int:
        return self.blocks.shape[1]

    @property
    def m(self) -> int:
        return self.blocks.shape[2]

    @property
    def count(self) -> int:
        """Index N of the last available block G_N."""
        return self.blocks.shape[0] - 1

    def block(self, t: int) -> NDArray:
        if not 0 <= t <= self.count:
            raise IndexError(f"G_t available for t in 0..{self.count}, got {t}")
        return self.blocks[t]
