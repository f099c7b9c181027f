from pathlib import Path
from typing import Optional, Union

import numpy as np

from data_types.errors import (
    ConfigError,
    DimensionMismatchError,
    InvalidParameterError,
    SchemaMismatchError,
)
from data_types.experiment import ExperimentConfig, SystemSpec
from data_types.methods import Method
from data_types.model import HyperParams
from handlers.base import BaseIO
from handlers.data_files import DataFileIO
from parsers.base_parser import BaseParser
from services.linalg import as_matrix, as_square, as_vector
from utils.logger import Logger

HYPERPARAM_FIELDS = (
    "gamma",
    "mu",
    "rho",
    "max_iters",
    "grad_tol",
    "seed",
    "step",
    "step_rule",
    "restarts",
)

# Data file each method reads, keyed under "data" in the experiment config
DATA_FIELDS = {
    "trajectory": lambda method: method.needs_trajectory,
    "observations": lambda method: method.needs_observations,
    "impulse_response": lambda method: method.needs_impulse_response,
}


class ExperimentConfigParser(BaseIO, BaseParser):
    """
    Validates JSON experiment configs.

    Relative paths are resolved against the directory of the config file.
    Every rejection is a `ConfigError` naming the offending field.

    Example config:
        {
          "schema_version": 1,
          "method": "ridge",
          "data": {"trajectory": "trajectory.csv"},
          "hyperparams": {"gamma": 1.0},
          "sweep": {"gamma": [0.1, 1.0, 10.0]},
          "out": "records/ridge.json"
        }
    """

    def __init__(self, config_path: str = None):
        super().__init__(config_path)
        self.logger = Logger(__name__)
        self.schema_version = int(
            self.load_from_config("RECORDS").get("schema_version", 1)
        )

    def parse_file(
        self, path: Union[str, Path], overrides: Optional[dict] = None
    ) -> ExperimentConfig:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist", field="config")
        content = DataFileIO().read_json(path)
        if not isinstance(content, dict):
            raise ConfigError(f"{path} must hold a JSON object", field="config")
        return self.parse(content, source=path.as_posix(), overrides=overrides)

    def parse(
        self, content: dict, source: str = None, overrides: Optional[dict] = None
    ) -> ExperimentConfig:
        base_dir = Path(source).resolve().parent if source else Path.cwd()

        version = self.require(content, "schema_version", source)
        if version != self.schema_version:
            raise SchemaMismatchError(
                f"expected {self.schema_version}, got {version}", field="schema_version"
            )

        method = self._method(self.require(content, "method", source))
        hyperparams = self._hyperparams(content.get("hyperparams") or {}, overrides or {})
        data = self._data(method, content.get("data") or {}, base_dir)
        system = None
        if method in (Method.SIMULATE, Method.ASYMPTOTICS):
            system = self._system(self.require(content, "system", source), base_dir)

        options = dict(content.get("options") or {})
        if method is Method.ASYMPTOTICS:
            self._gamma_grid(options)
        if "dump_gains" in options:
            options["dump_gains"] = self._gains_path(
                method, options["dump_gains"], content.get("sweep"), base_dir
            )

        config = ExperimentConfig(
            schema_version=int(version),
            method=method,
            hyperparams=hyperparams,
            data=data,
            system=system,
            options=options,
            sweep=self._sweep(content.get("sweep") or {}),
            ground_truth=self._ground_truth(content.get("ground_truth")),
            out=base_dir / content["out"] if content.get("out") else None,
            raw=content,
        )
        self.logger.debug(f"parsed {method.value} experiment from {source or '<dict>'}")
        return config

    @staticmethod
    def _method(value) -> Method:
        try:
            return Method(value)
        except ValueError:
            allowed = ", ".join(method.value for method in Method)
            raise ConfigError(f"unknown method {value!r} (one of {allowed})", field="method")

    @staticmethod
    def _hyperparams(values: dict, overrides: dict) -> HyperParams:
        if not isinstance(values, dict):
            raise ConfigError("must be an object", field="hyperparams")
        for key in values:
            if key not in HYPERPARAM_FIELDS:
                raise ConfigError("unknown hyperparameter", field=f"hyperparams.{key}")
        try:
            return HyperParams.from_config(**{**values, **overrides})
        except (InvalidParameterError, ValueError, TypeError) as error:
            raise ConfigError(str(error), field="hyperparams") from error

    def _data(self, method: Method, values: dict, base_dir: Path) -> dict[str, Path]:
        data = {}
        for name, needed in DATA_FIELDS.items():
            if not needed(method):
                continue
            if not values.get(name):
                raise ConfigError(
                    f"method {method.value} needs a {name} file", field=f"data.{name}"
                )
            path = (base_dir / values[name]).resolve()
            if not path.exists():
                raise ConfigError(f"file {path} does not exist", field=f"data.{name}")
            if name == "observations" and not DataFileIO.sidecar_path(path).exists():
                raise ConfigError(
                    f"sidecar {DataFileIO.sidecar_path(path)} does not exist",
                    field=f"data.{name}",
                )
            data[name] = path
        return data

    def _system(self, value, base_dir: Path) -> SystemSpec:
        if isinstance(value, str):
            path = (base_dir / value).resolve()
            if not path.exists():
                raise ConfigError(f"file {path} does not exist", field="system")
            value = DataFileIO().read_json(path)
        if not isinstance(value, dict):
            raise ConfigError("must be an object or a path", field="system")
        for name in ("A", "C", "x", "T"):
            self.require(value, name, "system")
        try:
            A = as_square(value["A"], "A")
            C = as_matrix(value["C"], "C", shape=(None, A.shape[0]))
            x = as_vector(value["x"], "x", size=A.shape[0])
            B = as_matrix(value["B"], "B", shape=(A.shape[0], None)) if "B" in value else None
        except DimensionMismatchError as error:
            raise ConfigError(str(error), field="system") from error
        horizon = value["T"]
        if isinstance(horizon, bool) or not isinstance(horizon, int) or horizon < 2:
            raise ConfigError(f"must be an integer >= 2, got {horizon!r}", field="T")
        return SystemSpec(A, C, x, horizon, B)

    @staticmethod
    def _gamma_grid(options: dict) -> None:
        grid = options.get("gamma_grid")
        if not grid or not isinstance(grid, list):
            raise ConfigError("asymptotics needs a list of gammas", field="options.gamma_grid")
        if any(later <= earlier for earlier, later in zip(grid, grid[1:])) or min(grid) <= 0:
            raise ConfigError("must be positive and increasing", field="options.gamma_grid")

    @staticmethod
    def _gains_path(method: Method, value, sweep, base_dir: Path) -> Path:
        if method is not Method.ALTMIN:
            raise ConfigError("only altmin writes gains", field="options.dump_gains")
        if not isinstance(value, str) or not value:
            raise ConfigError("must be a file path", field="options.dump_gains")
        if sweep:
            raise ConfigError("cannot be combined with a sweep", field="options.dump_gains")
        return (base_dir / value).resolve()

    @staticmethod
    def _sweep(values: dict) -> dict[str, list[float]]:
        sweep = {}
        for key, grid in values.items():
            if key not in ("gamma", "mu"):
                raise ConfigError("only gamma and mu can be swept", field=f"sweep.{key}")
            if not isinstance(grid, list) or not grid:
                raise ConfigError("must be a non-empty list", field=f"sweep.{key}")
            if any(not value > 0 for value in grid):
                raise ConfigError("values must be > 0", field=f"sweep.{key}")
            sweep[key] = [float(value) for value in grid]
        return sweep

    @staticmethod
    def _ground_truth(value) -> Optional[np.ndarray]:
        if value is None:
            return None
        try:
            return as_square(value, "ground_truth")
        except DimensionMismatchError as error:
            raise ConfigError(str(error), field="ground_truth") from error
