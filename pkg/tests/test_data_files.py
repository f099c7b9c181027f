import json

import numpy as np
import pandas as pd
import pytest

from data_types.errors import ConfigError, DimensionMismatchError, SchemaMismatchError
from data_types.methods import Method
from data_types.model import ImpulseResponse, ObservedData, Trajectory
from data_types.results import SmootherGains
from handlers.data_files import DataFileIO
from parsers.experiment_parser import ExperimentConfigParser
from parsers.record_parser import RunRecordParser


@pytest.fixture
def io():
    return DataFileIO()


def _write_config(tmp_path, content, name="experiment.json"):
    path = tmp_path / name
    path.write_text(json.dumps(content))
    return path


def test_trajectory_round_trip(io, tmp_path):
    trajectory = Trajectory([[1.0, -2.0], [0.1, 1.0 / 3.0], [np.pi, 1e-12]])
    path = io.write_trajectory(trajectory, tmp_path / "trajectory.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["t", "x1", "x2"]
    assert frame["t"].tolist() == [1, 2, 3]
    np.testing.assert_array_equal(io.read_trajectory(path).states, trajectory.states)


def test_observations_round_trip(io, tmp_path):
    data = ObservedData([1.0, 0.5], [[1.0, 0.3]], [[0.2], [0.7], [-0.1]])
    path, sidecar = io.write_observations(data, tmp_path / "observations.csv")
    assert sidecar == tmp_path / "observations.json"
    assert pd.read_csv(path)["t"].tolist() == [2, 3, 4]

    content = json.loads(sidecar.read_text())
    assert content == {"C": [1.0, 0.3], "T": 4, "n": 2, "p": 1, "x": [1.0, 0.5]}

    loaded = io.read_observations(path)
    np.testing.assert_array_equal(loaded.x, data.x)
    np.testing.assert_array_equal(loaded.C, data.C)
    np.testing.assert_array_equal(loaded.observations, data.observations)


def test_observations_sidecar_must_match(io, tmp_path):
    data = ObservedData([1.0], [[1.0]], [[0.5], [0.25]])
    path, sidecar = io.write_observations(data, tmp_path / "observations.csv")
    content = json.loads(sidecar.read_text())
    content["T"] = 5
    sidecar.write_text(json.dumps(content))
    with pytest.raises(DimensionMismatchError):
        io.read_observations(path)

    del content["C"]
    sidecar.write_text(json.dumps(content))
    with pytest.raises(ConfigError) as error:
        io.read_observations(path)
    assert error.value.field == "C"


def test_bad_header_is_rejected(io, tmp_path):
    path = tmp_path / "trajectory.csv"
    path.write_text("t,x2,x1\n1,0,0\n2,0,0\n")
    with pytest.raises(ConfigError) as error:
        io.read_trajectory(path)
    assert error.value.field == "header"


def test_bad_time_column_is_rejected(io, tmp_path):
    path = tmp_path / "trajectory.csv"
    path.write_text("time,x1\n1,0\n2,0\n")
    with pytest.raises(ConfigError) as error:
        io.read_trajectory(path)
    assert error.value.field == "t"

    path.write_text("t,x1\n1,0\n3,0\n")
    with pytest.raises(ConfigError):
        io.read_trajectory(path)


def test_impulse_response_round_trip(io, tmp_path):
    response = ImpulseResponse.from_markov([[[1.0, 2.0]], [[0.5, -1.0]]])
    path = io.write_impulse_response(response, tmp_path / "response.json")
    content = json.loads(path.read_text())
    assert content["p"] == 1 and content["m"] == 2
    assert content["blocks"][1] == [1.0, 2.0]
    np.testing.assert_array_equal(io.read_impulse_response(path).blocks, response.blocks)


def test_invalid_json(io, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        io.read_json(path)


def test_parser_missing_horizon(tmp_path):
    path = _write_config(
        tmp_path,
        {"schema_version": 1, "method": "simulate", "system": {"A": [[0.5]], "C": [[1.0]], "x": [1.0]}},
    )
    with pytest.raises(ConfigError) as error:
        ExperimentConfigParser().parse_file(path)
    assert error.value.field == "T"


@pytest.mark.parametrize("horizon", [1, 2.5, True])
def test_parser_rejects_bad_horizon(tmp_path, horizon):
    path = _write_config(
        tmp_path,
        {
            "schema_version": 1,
            "method": "simulate",
            "system": {"A": [[0.5]], "C": [[1.0]], "x": [1.0], "T": horizon},
        },
    )
    with pytest.raises(ConfigError) as error:
        ExperimentConfigParser().parse_file(path)
    assert error.value.field == "T"


def test_parser_unknown_method(tmp_path):
    path = _write_config(tmp_path, {"schema_version": 1, "method": "kalman"})
    with pytest.raises(ConfigError) as error:
        ExperimentConfigParser().parse_file(path)
    assert error.value.field == "method"


def test_parser_schema_mismatch(tmp_path):
    path = _write_config(tmp_path, {"schema_version": 2, "method": "ls"})
    with pytest.raises(SchemaMismatchError):
        ExperimentConfigParser().parse_file(path)


def test_parser_missing_data_file(tmp_path):
    path = _write_config(
        tmp_path, {"schema_version": 1, "method": "ridge", "data": {"trajectory": "absent.csv"}}
    )
    with pytest.raises(ConfigError) as error:
        ExperimentConfigParser().parse_file(path)
    assert error.value.field == "data.trajectory"


def test_parser_rejects_bad_hyperparameters(tmp_path, io):
    io.write_trajectory(Trajectory([[1.0], [0.5]]), tmp_path / "trajectory.csv")
    base = {"schema_version": 1, "method": "ridge", "data": {"trajectory": "trajectory.csv"}}
    with pytest.raises(ConfigError) as error:
        ExperimentConfigParser().parse_file(
            _write_config(tmp_path, {**base, "hyperparams": {"gamma": -1.0}})
        )
    assert error.value.field == "hyperparams"
    with pytest.raises(ConfigError) as error:
        ExperimentConfigParser().parse_file(
            _write_config(tmp_path, {**base, "hyperparams": {"lambda": 1.0}})
        )
    assert error.value.field == "hyperparams.lambda"


def test_parser_sweep_grid(tmp_path, io):
    io.write_trajectory(Trajectory([[1.0], [0.5], [0.25]]), tmp_path / "data" / "trajectory.csv")
    path = _write_config(
        tmp_path,
        {
            "schema_version": 1,
            "method": "ridge",
            "data": {"trajectory": "data/trajectory.csv"},
            "hyperparams": {"gamma": 2.0, "mu": 3.0},
            "sweep": {"gamma": [0.1, 1.0, 10.0]},
            "out": "records/ridge.json",
        },
    )
    config = ExperimentConfigParser().parse_file(path)
    assert config.method is Method.RIDGE
    assert config.data["trajectory"] == (tmp_path / "data" / "trajectory.csv").resolve()
    assert config.out.resolve() == (tmp_path / "records" / "ridge.json").resolve()

    points = config.grid_points()
    assert [point.hyperparams.gamma for point in points] == [0.1, 1.0, 10.0]
    assert all(point.hyperparams.mu == 3.0 for point in points)
    assert all(not point.sweep for point in points)


def test_parser_seed_override(tmp_path, io):
    io.write_trajectory(Trajectory([[1.0], [0.5]]), tmp_path / "trajectory.csv")
    path = _write_config(
        tmp_path,
        {
            "schema_version": 1,
            "method": "gd",
            "data": {"trajectory": "trajectory.csv"},
            "hyperparams": {"seed": 4},
        },
    )
    assert ExperimentConfigParser().parse_file(path).hyperparams.seed == 4
    assert ExperimentConfigParser().parse_file(path, overrides={"seed": 9}).hyperparams.seed == 9


def test_parser_asymptotics_needs_gamma_grid(tmp_path):
    content = {
        "schema_version": 1,
        "method": "asymptotics",
        "system": {"A": [[0.5]], "C": [[1.0]], "x": [1.0], "T": 3},
    }
    with pytest.raises(ConfigError) as error:
        ExperimentConfigParser().parse_file(_write_config(tmp_path, content))
    assert error.value.field == "options.gamma_grid"
    content["options"] = {"gamma_grid": [10.0, 1.0]}
    with pytest.raises(ConfigError):
        ExperimentConfigParser().parse_file(_write_config(tmp_path, content))


def test_record_parser(tmp_path, io):
    record = {"schema_version": 1, "method": "ls", "hyperparams": {}, "result": {"A": [[0.5]]}}
    good = io.write_json(record, tmp_path / "good.json")
    assert RunRecordParser().parse_files([good]) == [record]

    with pytest.raises(ConfigError) as error:
        RunRecordParser().parse_files([])
    assert error.value.field == "records"

    stale = io.write_json({**record, "schema_version": 0}, tmp_path / "stale.json")
    with pytest.raises(SchemaMismatchError):
        RunRecordParser().parse_files([good, stale])

    partial = io.write_json({"schema_version": 1, "method": "ls"}, tmp_path / "partial.json")
    with pytest.raises(ConfigError) as error:
        RunRecordParser().parse_files([partial])
    assert error.value.field == "hyperparams"


def test_parser_gains_dump(tmp_path, io):
    data = ObservedData([1.0], [[1.0]], [[0.5], [0.25]])
    io.write_observations(data, tmp_path / "observations.csv")
    base = {
        "schema_version": 1,
        "method": "altmin",
        "data": {"observations": "observations.csv"},
        "options": {"dump_gains": "out/gains.json"},
    }
    config = ExperimentConfigParser().parse_file(_write_config(tmp_path, base))
    assert config.options["dump_gains"] == (tmp_path / "out" / "gains.json").resolve()

    for content in (
        {**base, "sweep": {"gamma": [1.0, 10.0]}},
        {**base, "method": "pgd"},
        {**base, "options": {"dump_gains": 3}},
    ):
        with pytest.raises(ConfigError) as error:
            ExperimentConfigParser().parse_file(_write_config(tmp_path, content))
        assert error.value.field == "options.dump_gains"


def test_write_gains(io, tmp_path):
    gains = SmootherGains(np.zeros((2, 1, 1)), np.array([[1.0], [0.5]]))
    path = io.write_gains(gains, tmp_path / "gains.json")
    assert json.loads(path.read_text()) == {"Sigma": [[[0.0]], [[0.0]]], "r": [[1.0], [0.5]]}
