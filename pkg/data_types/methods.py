from enum import Enum


class Method(Enum):
    SIMULATE = "simulate"
    LS = "ls"
    RIDGE = "ridge"
    DUAL = "dual"
    GD = "gd"
    NEUMANN = "neumann"
    LIFT = "lift"
    PGD = "pgd"
    ALTMIN = "altmin"
    DUALSTEP = "dualstep"
    REALIZE = "realize"
    SILVERMAN = "silverman"
    ASYMPTOTICS = "asymptotics"

    @property
    def needs_trajectory(self) -> bool:
        return self in (Method.LS, Method.RIDGE, Method.DUAL, Method.GD, Method.NEUMANN)

    @property
    def needs_observations(self) -> bool:
        return self in (Method.LIFT, Method.PGD, Method.ALTMIN, Method.DUALSTEP)

    @property
    def needs_impulse_response(self) -> bool:
        return self in (Method.REALIZE, Method.SILVERMAN)


class TerminationReason(Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    DIVERGED = "diverged"
    LINE_SEARCH_FAILED = "line_search_failed"


class StepRule(Enum):
    # trace bound 1/(1 + γΣ|x_t|²), half of the admissible interval
    FIXED = "fixed"
    # 1/(1 + γ λ_max(Σ x_t x_t*))
    LIPSCHITZ = "lipschitz"
    ARMIJO = "armijo"
    # 1/L̂ with L̂ from power iteration on the Hessian
    CURVATURE = "curvature"
