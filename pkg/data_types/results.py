from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from numpy.typing import NDArray

from data_types.methods import TerminationReason
from services.linalg import frozen


@dataclass
class DescentReport:
    """
    Per-iteration diagnostics of an iterative scheme.

    Entry k of `objectives` / `grad_norms` belongs to iterate k+1 (the
    initial point is entry 0); `steps[k]` is the step that produced iterate k+2.
    """

    objectives: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)
    termination: Optional[TerminationReason] = None
    final_iterate: Any = None
    diverged: bool = False
    ledger: list[dict] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        """Number of updates applied to the initial point."""
        return len(self.steps)

    @property
    def converged(self) -> bool:
        return self.termination is TerminationReason.CONVERGED

    def record(self, objective: float, grad_norm: float) -> None:
        self.objectives.append(float(objective))
        self.grad_norms.append(float(grad_norm))

    def is_monotone(self, slack: float = 0.0) -> bool:
        values = np.asarray(self.objectives)
        return bool(np.all(np.diff(values) <= slack * (1.0 + np.abs(values[:-1]))))

    def to_dict(self) -> dict:
        return {
            "objectives": list(self.objectives),
            "grad_norms": list(self.grad_norms),
            "steps": list(self.steps),
            "iterations": self.iterations,
            "termination": self.termination.value if self.termination else None,
            "diverged": self.diverged,
            **({"descent_ledger": self.ledger} if self.ledger else {}),
            **self.extras,
        }


@dataclass(frozen=True)
class RidgeState:
    """
    Ridge estimate after T-1 transitions, kept for rank-one extension.

    `gain` is B_T = (I/γ + Σ x_t x_t*)^{-1}; `gram` and `cross` are the raw
    sums used by the periodic refactorization.
    """

    horizon: int
    gain: NDArray
    estimate: NDArray
    gamma: float
    gram: NDArray
    cross: NDArray
    updates_since_refresh: int = 0

    def __post_init__(self) -> None:
        for name in ("gain", "estimate", "gram", "cross"):
            object.__setattr__(self, name, frozen(getattr(self, name)))


@dataclass(frozen=True)
class DualCoefficients:
    """p_2..p_T row-stacked (row t-2 holds p_t)."""

    vectors: NDArray
    gamma: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "vectors", frozen(np.atleast_2d(self.vectors)))

    def p(self, t: int) -> NDArray:
        return self.vectors[t - 2]


@dataclass(frozen=True)
class DecisionPoint:
    """
    Z = (A, v_1..v_{T-1}) with ||Z||² = tr(AA*) + Σ|v_t|².

    `controls` is row-stacked (row t-1 holds v_t).
    """

    A: NDArray
    controls: NDArray

    def __post_init__(self) -> None:
        object.__setattr__(self, "A", frozen(self.A))
        object.__setattr__(self, "controls", frozen(np.atleast_2d(self.controls)))

    @classmethod
    def zeros(cls, n: int, horizon: int) -> "DecisionPoint":
        return cls(np.zeros((n, n)), np.zeros((horizon - 1, n)))

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.A**2) + np.sum(self.controls**2)))

    def inner(self, other: "DecisionPoint") -> float:
        return float(np.sum(self.A * other.A) + np.sum(self.controls * other.controls))

    def axpy(self, scale: float, direction: "DecisionPoint") -> "DecisionPoint":
        """self + scale * direction."""
        return DecisionPoint(
            self.A + scale * direction.A, self.controls + scale * direction.controls
        )

    def scaled(self, scale: float) -> "DecisionPoint":
        return DecisionPoint(scale * self.A, scale * self.controls)


@dataclass(frozen=True)
class GradientValue(DecisionPoint):
    """DJ(Z) = (dA, dv_1..dv_{T-1}), same shape as the decision point."""

    @property
    def dA(self) -> NDArray:
        return self.A

    @property
    def dv(self) -> NDArray:
        return self.controls


@dataclass(frozen=True)
class AdjointSequence:
    """p_1..p_T row-stacked; p_1 is computed but never enters the gradient."""

    vectors: NDArray

    def __post_init__(self) -> None:
        object.__setattr__(self, "vectors", frozen(self.vectors))

    def p(self, t: int) -> NDArray:
        return self.vectors[t - 1]


@dataclass(frozen=True)
class SmootherGains:
    """Riccati gains Σ_1..Σ_T (shape (T, n, n)) and drifts r_1..r_T (shape (T, n))."""

    sigma: NDArray
    drift: NDArray

    def __post_init__(self) -> None:
        object.__setattr__(self, "sigma", frozen(self.sigma))
        object.__setattr__(self, "drift", frozen(self.drift))

    @property
    def horizon(self) -> int:
        return self.sigma.shape[0]

    def to_dict(self) -> dict:
        return {"Sigma": self.sigma.tolist(), "r": self.drift.tolist()}


@dataclass(frozen=True)
class AltMinState:
    """Iterate of the alternating scheme: A^n with its smoothed states, adjoints and J(A^n, x^n)."""

    A: NDArray
    states: NDArray
    adjoints: NDArray
    objective: float

    def __post_init__(self) -> None:
        for name in ("A", "states", "adjoints"):
            object.__setattr__(self, name, frozen(getattr(self, name)))


@dataclass(frozen=True)
class ExpansionData:
    """
    Large-γ expansion around Ā with μ = γ.

    Arrays are 0-based in time (index t-1 holds the value at t): normalized
    gains Σ̂_t, transition factors Γ_t, observation weights Λ_t, the base
    trajectory x̄_t and, once solved, the first-order terms A₁, r¹_t, p⁰_t.
    """

    sigma_hat: NDArray
    transitions: NDArray
    lam: NDArray
    Abar: NDArray
    xbar: Optional[NDArray] = None
    A1: Optional[NDArray] = None
    r1: Optional[NDArray] = None
    p0: Optional[NDArray] = None

    @property
    def horizon(self) -> int:
        return self.sigma_hat.shape[0]

    @property
    def x1(self) -> Optional[NDArray]:
        """x¹_t = r¹_t - Σ̂_t p⁰_t."""
        if self.r1 is None or self.p0 is None:
            return None
        return self.r1 - np.einsum("tij,tj->ti", self.sigma_hat, self.p0)

    def phi(self, t: int, s: int) -> NDArray:
        """Φ(t, s) = Γ_t Γ_{t-1} ⋯ Γ_s, the identity when s = t + 1."""
        if not 1 <= s <= t + 1 or t > self.horizon:
            raise IndexError(f"Φ({t}, {s}) is undefined for T={self.horizon}")
        product = np.eye(self.Abar.shape[0])
        for k in range(s, t + 1):
            product = self.transitions[k - 1] @ product
        return product

    def to_dict(self) -> dict:
        def listed(value):
            return None if value is None else np.asarray(value).tolist()

        return {
            "Sigma_hat": listed(self.sigma_hat),
            "Gamma": listed(self.transitions),
            "Lambda": listed(self.lam),
            "Abar": listed(self.Abar),
            "xbar": listed(self.xbar),
            "A1": listed(self.A1),
            "r1": listed(self.r1),
            "p0": listed(self.p0),
            "x1": listed(self.x1),
        }
