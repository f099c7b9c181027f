import json
from enum import Enum
from pathlib import Path
from typing import Any, Union

import numpy as np
import pandas as pd

from data_types.errors import ConfigError, DimensionMismatchError
from data_types.model import ImpulseResponse, ObservedData, Trajectory
from data_types.results import SmootherGains
from utils.logger import Logger

from .base import BaseIO

PathLike = Union[str, Path]


def to_jsonable(value: Any) -> Any:
    """Fallback for `json.dump`: numpy arrays and scalars, enums, paths."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return value.as_posix()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


class DataFileIO(BaseIO):
    """
    Reads and writes the on-disk formats of the toolkit.

    * trajectory CSV: header `t,x1,...,xn`, one row per t = 1..T
    * observation CSV: header `t,y1,...,yp` for t = 2..T, plus a JSON sidecar
      (same stem, `.json`) holding x, C (row-major), n, p and T
    * impulse response JSON: `{"m", "p", "blocks"}` with G_0..G_N row-major
    * run records and gain dumps as sorted-key JSON

    Column naming and float precision come from the CSV section of
    configs/config.yaml unless given here.
    """

    @classmethod
    def __protocol_name__(cls):
        return "CSV"

    def __init__(self, float_format: str = None, config_path: str = None):
        super().__init__(config_path)
        self.logger = Logger(__name__)

        config_values = self.load_from_config(DataFileIO.__protocol_name__())
        self.float_format = float_format or config_values.get("float_format", "%.17g")
        self.time_column = config_values.get("time_column", "t")
        self.state_prefix = config_values.get("state_prefix", "x")
        self.observation_prefix = config_values.get("observation_prefix", "y")

    @staticmethod
    def sidecar_path(csv_path: PathLike) -> Path:
        return Path(csv_path).with_suffix(".json")

    def _write_frame(self, values: np.ndarray, times: range, prefix: str, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(
            values, columns=[f"{prefix}{i + 1}" for i in range(values.shape[1])]
        )
        frame.insert(0, self.time_column, list(times))
        frame.to_csv(path, index=False, float_format=self.float_format)
        return path

    def _read_frame(self, path: PathLike, prefix: str, first_time: int) -> np.ndarray:
        frame = pd.read_csv(path, float_precision="round_trip")
        if self.time_column not in frame.columns:
            raise ConfigError(f"missing column in {path}", field=self.time_column)
        columns = [column for column in frame.columns if column != self.time_column]
        expected = [f"{prefix}{i + 1}" for i in range(len(columns))]
        if not columns or columns != expected:
            raise ConfigError(
                f"expected columns {expected} in {path}, got {columns}", field="header"
            )
        times = frame[self.time_column].to_numpy()
        if not np.array_equal(times, np.arange(first_time, first_time + len(frame))):
            raise ConfigError(
                f"time column of {path} must run {first_time}, {first_time + 1}, ...",
                field=self.time_column,
            )
        return frame[columns].to_numpy(dtype=float)

    def write_trajectory(self, trajectory: Trajectory, path: PathLike) -> Path:
        path = self._write_frame(
            trajectory.states, range(1, trajectory.horizon + 1), self.state_prefix, path
        )
        self.logger.info(f"wrote trajectory n={trajectory.n}, T={trajectory.horizon} to {path}")
        return path

    def read_trajectory(self, path: PathLike) -> Trajectory:
        return Trajectory(self._read_frame(path, self.state_prefix, 1))

    def write_observations(self, data: ObservedData, path: PathLike) -> tuple[Path, Path]:
        path = self._write_frame(
            data.observations, range(2, data.horizon + 1), self.observation_prefix, path
        )
        sidecar = self.sidecar_path(path)
        self.write_json(
            {
                "x": data.x,
                "C": data.C.reshape(-1),
                "n": data.n,
                "p": data.p,
                "T": data.horizon,
            },
            sidecar,
        )
        self.logger.info(f"wrote observations p={data.p}, T={data.horizon} to {path}")
        return path, sidecar

    def read_observations(self, path: PathLike) -> ObservedData:
        observations = self._read_frame(path, self.observation_prefix, 2)
        sidecar = self.read_json(self.sidecar_path(path))
        for field in ("x", "C", "n", "p", "T"):
            if field not in sidecar:
                raise ConfigError(f"missing from {self.sidecar_path(path)}", field=field)
        n, p, horizon = int(sidecar["n"]), int(sidecar["p"]), int(sidecar["T"])
        C = np.asarray(sidecar["C"], dtype=float).reshape(p, n)
        if observations.shape != (horizon - 1, p):
            raise DimensionMismatchError(
                f"{path} holds {observations.shape} observations, sidecar says T={horizon}, p={p}"
            )
        return ObservedData(np.asarray(sidecar["x"], dtype=float), C, observations)

    def write_impulse_response(self, response: ImpulseResponse, path: PathLike) -> Path:
        return self.write_json(
            {
                "m": response.m,
                "p": response.p,
                "blocks": [block.reshape(-1) for block in response.blocks],
            },
            path,
        )

    def read_impulse_response(self, path: PathLike) -> ImpulseResponse:
        content = self.read_json(path)
        for field in ("m", "p", "blocks"):
            if field not in content:
                raise ConfigError(f"missing from {path}", field=field)
        p, m = int(content["p"]), int(content["m"])
        blocks = np.array(
            [np.asarray(block, dtype=float).reshape(p, m) for block in content["blocks"]]
        )
        return ImpulseResponse(blocks)

    def write_gains(self, gains: SmootherGains, path: PathLike) -> Path:
        return self.write_json(gains.to_dict(), path)

    def write_json(self, content: dict, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as file:
            json.dump(content, file, indent=2, sort_keys=True, default=to_jsonable)
            file.write("\n")
        return path

    def read_json(self, path: PathLike) -> dict:
        with open(path, "r") as file:
            try:
                return json.load(file)
            except json.JSONDecodeError as error:
                raise ConfigError(f"{path} is not valid JSON ({error.msg})") from error
