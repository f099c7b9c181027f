from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from numpy.typing import NDArray

from data_types.methods import Method
from data_types.model import HyperParams


@dataclass(frozen=True)
class SystemSpec:
    """Inline system for `simulate` and `asymptotics`: A, C, x, the horizon T and an optional input matrix B."""

    A: NDArray
    C: NDArray
    x: NDArray
    horizon: int
    B: Optional[NDArray] = None


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One validated experiment.

    `data` maps "trajectory", "observations" or "impulse_response" to resolved
    paths; `options` carries method-specific settings (order, max_depth,
    neumann_order, gamma_grid, ...); `raw` is the config exactly as read and is
    echoed into every run record.
    """

    schema_version: int
    method: Method
    hyperparams: HyperParams
    data: dict[str, Path] = field(default_factory=dict)
    system: Optional[SystemSpec] = None
    options: dict = field(default_factory=dict)
    sweep: dict[str, list[float]] = field(default_factory=dict)
    ground_truth: Optional[NDArray] = None
    out: Optional[Path] = None
    raw: dict = field(default_factory=dict)

    def grid_points(self) -> list["ExperimentConfig"]:
        """One config per (gamma, mu) of the sweep grid; the config itself without a sweep."""
        if not self.sweep:
            return [self]
        gammas = self.sweep.get("gamma") or [self.hyperparams.gamma]
        mus = self.sweep.get("mu") or [self.hyperparams.mu]
        return [
            replace(
                self,
                hyperparams=self.hyperparams.with_(gamma=float(gamma), mu=float(mu)),
                sweep={},
            )
            for gamma in gammas
            for mu in mus
        ]
