import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from importlib import metadata
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from data_types.errors import ConfigError, DimensionMismatchError
from data_types.experiment import ExperimentConfig
from data_types.methods import Method, TerminationReason
from data_types.model import ObservedData, SystemRealization, Trajectory
from data_types.results import DescentReport
from handlers.base import load_section
from handlers.data_files import DataFileIO
from services import (
    alternating,
    asymptotics,
    full_observation,
    partial_observation,
    realization,
    simulation,
    smoother,
)
from services.linalg import DEFAULT_RANK_TOL, as_square, frobenius
from utils.logger import Logger

LIBRARY_NAME = "linsysid"
DEFAULT_MARKOV_COUNT = 20


def library_version() -> str:
    try:
        return metadata.version(LIBRARY_NAME)
    except metadata.PackageNotFoundError:
        return "0.1.0"


def _report_envelope(report: DescentReport) -> dict:
    return {"report": report.to_dict(), "converged": report.converged}


def run_point(config: ExperimentConfig) -> dict:
    """Runs one grid point in the current process and returns its record."""
    return ExperimentRunner(config).run_single()


class ExperimentRunner:
    def __init__(self, config: ExperimentConfig, jobs: int = 1, io: DataFileIO = None):
        """
        Executes a parsed experiment config.

        Args:
            config (ExperimentConfig): Validated experiment.
            jobs (int): Worker processes for sweep grids; 1 runs in process.
            io (DataFileIO, optional): File reader/writer, built from configs/config.yaml if omitted.
        """
        self.config = config
        self.jobs = max(1, int(jobs))
        self.io = io or DataFileIO()
        self.logger = Logger(__name__)
        self.rank_tol = float(load_section("NUMERICS").get("rank_tol", DEFAULT_RANK_TOL))

        self.handlers: dict[Method, Callable[[], dict]] = {
            Method.LS: self._least_squares,
            Method.RIDGE: self._ridge,
            Method.DUAL: self._dual,
            Method.GD: self._gradient_descent,
            Method.NEUMANN: self._neumann,
            Method.LIFT: self._lift,
            Method.PGD: self._partial_descent,
            Method.ALTMIN: self._alternate,
            Method.DUALSTEP: self._dual_step,
            Method.REALIZE: self._realize,
            Method.SILVERMAN: self._silverman,
            Method.ASYMPTOTICS: self._asymptotics,
        }

    # -- simulate ---------------------------------------------------------

    def simulate(self, out_dir: Optional[Path] = None) -> list[Path]:
        """Writes trajectory.csv, observations.csv (+ sidecar) and, when B is given, impulse_response.json."""
        if self.config.method is not Method.SIMULATE:
            raise ConfigError("the simulate command needs method 'simulate'", field="method")
        out_dir = Path(out_dir or self.config.out or ".")
        system = self.config.system
        trajectory = simulation.simulate_full(system.A, system.x, system.horizon)
        data = simulation.simulate_observed(system.A, system.C, system.x, system.horizon)

        written = [self.io.write_trajectory(trajectory, out_dir / "trajectory.csv")]
        written.extend(self.io.write_observations(data, out_dir / "observations.csv"))
        if system.B is not None:
            count = int(self.config.options.get("markov_count", DEFAULT_MARKOV_COUNT))
            response = realization.markov_params(
                SystemRealization(system.A, system.B, system.C), count
            )
            written.append(self.io.write_impulse_response(response, out_dir / "impulse_response.json"))
        self.logger.info(f"simulation written to {out_dir}")
        return written

    # -- identify ---------------------------------------------------------

    def run(self, out: Optional[Path] = None) -> list[tuple[Path, dict]]:
        """
        Runs every grid point and writes one record per point.

        A single point goes to `out` as given; sweep points get an index suffix
        (`record-000.json`, ...). Records come back in grid order.
        """
        if self.config.method is Method.SIMULATE:
            raise ConfigError("use the simulate command for method 'simulate'", field="method")
        out = Path(out or self.config.out or f"{self.config.method.value}-record.json")
        points = self.config.grid_points()
        self.logger.info(
            f"running {self.config.method.value} on {len(points)} grid point(s) with {self.jobs} job(s)"
        )
        if self.jobs > 1 and len(points) > 1:
            with ProcessPoolExecutor(max_workers=self.jobs) as executor:
                records = list(executor.map(run_point, points))
        else:
            records = [ExperimentRunner(point, io=self.io).run_single() for point in points]

        written = []
        for index, record in enumerate(records):
            path = out if len(records) == 1 else out.with_name(f"{out.stem}-{index:03d}{out.suffix}")
            written.append((self.io.write_json(record, path), record))
        return written

    def run_single(self) -> dict:
        started = time.perf_counter()
        result = self.handlers[self.config.method]()
        elapsed = time.perf_counter() - started

        estimate = result.get("A")
        error = None
        if estimate is not None and self.config.ground_truth is not None:
            estimate = np.asarray(estimate, dtype=float)
            if estimate.shape == self.config.ground_truth.shape:
                error = frobenius(estimate - self.config.ground_truth)
            else:
                self.logger.warning(
                    f"ground truth shape {self.config.ground_truth.shape} does not match estimate {estimate.shape}"
                )
        return {
            "schema_version": self.config.schema_version,
            "library": {"name": LIBRARY_NAME, "version": library_version()},
            "method": self.config.method.value,
            "seed": self.config.hyperparams.seed,
            "config": self.config.raw,
            "hyperparams": asdict(self.config.hyperparams),
            "result": result,
            "error_vs_ground_truth": error,
            "wall_clock": elapsed,
        }

    @staticmethod
    def status(records: list[dict]) -> TerminationReason:
        """MAX_ITERS (or another failure) when any record stopped without converging."""
        for record in records:
            report = record["result"].get("report") or {}
            termination = report.get("termination")
            if termination and termination != TerminationReason.CONVERGED.value:
                return TerminationReason(termination)
        return TerminationReason.CONVERGED

    # -- data -------------------------------------------------------------

    def _trajectory(self) -> Trajectory:
        return self.io.read_trajectory(self.config.data["trajectory"])

    def _observations(self) -> ObservedData:
        return self.io.read_observations(self.config.data["observations"])

    def _initial(self, n: int) -> Optional[np.ndarray]:
        initial = self.config.options.get("initial")
        if initial is None:
            return None
        initial = as_square(initial, "options.initial")
        if initial.shape != (n, n):
            raise DimensionMismatchError(f"options.initial must be {n}x{n}, got {initial.shape}")
        return initial

    # -- full observation -------------------------------------------------

    def _least_squares(self) -> dict:
        A = full_observation.least_squares(self._trajectory(), self.rank_tol)
        return {"method": Method.LS.value, "A": A, "gamma": None}

    def _ridge(self) -> dict:
        gamma = self.config.hyperparams.gamma
        return {
            "method": Method.RIDGE.value,
            "A": full_observation.ridge(self._trajectory(), gamma),
            "gamma": gamma,
        }

    def _dual(self) -> dict:
        gamma = self.config.hyperparams.gamma
        trajectory = self._trajectory()
        coefficients, value = full_observation.dual_solve(trajectory, gamma)
        return {
            "method": Method.DUAL.value,
            "A": full_observation.reconstruct_from_dual(trajectory, coefficients),
            "gamma": gamma,
            "dual_coefficients": coefficients.vectors,
            "dual_value": value,
        }

    def _gradient_descent(self) -> dict:
        opts = self.config.hyperparams
        trajectory = self._trajectory()
        A, report = full_observation.gradient_descent(
            trajectory, opts.gamma, opts, initial=self._initial(trajectory.n)
        )
        return {"method": Method.GD.value, "A": A, "gamma": opts.gamma, **_report_envelope(report)}

    def _neumann(self) -> dict:
        gamma = self.config.hyperparams.gamma
        order = int(self.config.options.get("neumann_order", 1))
        A = full_observation.neumann_expansion(self._trajectory(), gamma, order, self.rank_tol)
        return {"method": Method.NEUMANN.value, "A": A, "gamma": gamma, "order": order}

    # -- partial observation ----------------------------------------------

    def _lift(self) -> dict:
        opts = self.config.hyperparams
        data = self._observations()
        A = partial_observation.lift_estimator(data, opts.gamma, self.rank_tol)
        solution = smoother.smoother_solve(A, data, opts.gamma, opts.mu)
        residual = partial_observation.stationarity_residual(
            A, solution.states, solution.adjoints, data, opts.gamma, opts.mu
        )
        return {
            "method": Method.LIFT.value,
            "A": A,
            "gamma": opts.gamma,
            "mu": opts.mu,
            "stationarity_residual": residual,
        }

    def _partial_descent(self) -> dict:
        opts = self.config.hyperparams
        point, report = partial_observation.gradient_descent(
            self._observations(), opts.gamma, opts.mu, opts
        )
        return {
            "method": Method.PGD.value,
            "A": point.A,
            "controls": point.controls,
            "gamma": opts.gamma,
            "mu": opts.mu,
            "stationarity_residual": report.extras["stationarity_residual"],
            **_report_envelope(report),
        }

    def _alternate(self) -> dict:
        opts = self.config.hyperparams
        data = self._observations()
        A, states, _, report = alternating.alternate(
            data, opts.gamma, opts.mu, opts.rho, opts, initial=self._initial(data.n)
        )
        result = {
            "method": Method.ALTMIN.value,
            "A": A,
            "states": states,
            "gamma": opts.gamma,
            "mu": opts.mu,
            "rho": opts.rho,
            "stationarity_residual": report.extras["stationarity_residual"],
            "descent_ledger": report.ledger,
            **_report_envelope(report),
        }
        gains_path = self.config.options.get("dump_gains")
        if gains_path:
            # gains of the final smoother pass at the returned A
            gains = smoother.riccati_gains(A, data, opts.gamma, opts.mu)
            result["gains_file"] = str(self.io.write_gains(gains, gains_path))
            self.logger.info(f"smoother gains written to {gains_path}")
        return result

    def _dual_step(self) -> dict:
        opts = self.config.hyperparams
        data = self._observations()
        steps = int(self.config.options.get("steps", 1))
        A = self._initial(data.n)
        if A is None:
            A = np.zeros((data.n, data.n))
        changes = []
        for _ in range(steps):
            following = alternating.dual_control_step(A, data, opts.gamma, opts.mu)
            changes.append(frobenius(following - A))
            A = following
        self.logger.warning("dualstep is experimental: no convergence is claimed")
        return {
            "method": Method.DUALSTEP.value,
            "A": A,
            "gamma": opts.gamma,
            "mu": opts.mu,
            "steps": steps,
            "changes": changes,
            "experimental": True,
        }

    # -- realization ------------------------------------------------------

    def _impulse_response(self):
        return self.io.read_impulse_response(self.config.data["impulse_response"])

    def _silverman_result(self, response) -> realization.SilvermanResult:
        shifts = int(
            self.config.options.get(
                "shifts", load_section("NUMERICS").get("silverman_shifts", realization.DEFAULT_SHIFTS)
            )
        )
        max_depth = int(self.config.options.get("max_depth", (response.count - shifts) // 2))
        return realization.silverman_order(response, max_depth, self.rank_tol, shifts)

    def _silverman(self) -> dict:
        result = self._silverman_result(self._impulse_response())
        return {"method": Method.SILVERMAN.value, **result.to_dict()}

    def _realize(self) -> dict:
        response = self._impulse_response()
        order = self.config.options.get("order")
        if order is None:
            order = self._silverman_result(response).order
            if order is None:
                raise ConfigError(
                    "Hankel ranks did not stabilize; give the order explicitly",
                    field="options.order",
                )
        system = realization.minimal_realization(response, int(order), self.rank_tol)
        check = realization.markov_params(system, 2 * int(order))
        mismatch = float(
            np.max(np.abs(check.blocks[1:] - response.blocks[1 : 2 * int(order) + 1]))
        )
        return {
            "method": Method.REALIZE.value,
            "A": system.A,
            "B": system.B,
            "C": system.C,
            "order": int(order),
            "markov_mismatch": mismatch,
        }

    # -- asymptotics ------------------------------------------------------

    def _asymptotics(self) -> dict:
        system = self.config.system
        diagnostics = asymptotics.expansion_validation(
            system.A,
            system.C,
            system.x,
            system.horizon,
            self.config.options["gamma_grid"],
            self.config.hyperparams,
        )
        return {"method": Method.ASYMPTOTICS.value, **diagnostics}
