import json

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from data_types.model import ObservedData, Trajectory
from handlers.data_files import DataFileIO
from main import main

SCALAR_SYSTEM = {"A": [[0.5]], "C": [[1.0]], "x": [1.0], "T": 3}


@pytest.fixture
def runner():
    return CliRunner()


def _write_config(path, content):
    path.write_text(json.dumps(content))
    return str(path)


@pytest.fixture
def trajectory_file(tmp_path):
    return DataFileIO().write_trajectory(Trajectory([[1.0], [0.5], [0.25]]), tmp_path / "trajectory.csv")


@pytest.fixture
def observations_file(tmp_path):
    data = ObservedData([1.0], [[1.0]], [[0.5], [0.25]])
    path, _ = DataFileIO().write_observations(data, tmp_path / "observations.csv")
    return path


def _identify(runner, tmp_path, content, name="experiment"):
    config = _write_config(tmp_path / f"{name}.json", {"schema_version": 1, **content})
    out = tmp_path / f"{name}-record.json"
    result = runner.invoke(main, ["identify", "--config", config, "--out", str(out)])
    return result, out


def test_simulate_writes_observations(runner, tmp_path):
    config = _write_config(
        tmp_path / "simulate.json",
        {"schema_version": 1, "method": "simulate", "system": SCALAR_SYSTEM},
    )
    result = runner.invoke(main, ["simulate", "--config", config, "--out", str(tmp_path / "sim")])
    assert result.exit_code == 0, result.output

    observations = pd.read_csv(tmp_path / "sim" / "observations.csv")
    assert observations["t"].tolist() == [2, 3]
    assert observations["y1"].tolist() == [0.5, 0.25]
    trajectory = pd.read_csv(tmp_path / "sim" / "trajectory.csv")
    assert trajectory["x1"].tolist() == [1.0, 0.5, 0.25]
    assert (tmp_path / "sim" / "observations.json").exists()


def test_simulate_with_input_matrix_writes_impulse_response(runner, tmp_path):
    config = _write_config(
        tmp_path / "simulate.json",
        {
            "schema_version": 1,
            "method": "simulate",
            "system": {**SCALAR_SYSTEM, "B": [[1.0]]},
            "options": {"markov_count": 4},
        },
    )
    result = runner.invoke(main, ["simulate", "--config", config, "--out", str(tmp_path / "sim")])
    assert result.exit_code == 0, result.output
    response = DataFileIO().read_impulse_response(tmp_path / "sim" / "impulse_response.json")
    np.testing.assert_allclose(response.blocks.ravel(), [0.0, 1.0, 0.5, 0.25, 0.125])


def test_missing_horizon_exits_with_input_error(runner, tmp_path):
    system = {key: value for key, value in SCALAR_SYSTEM.items() if key != "T"}
    config = _write_config(
        tmp_path / "simulate.json", {"schema_version": 1, "method": "simulate", "system": system}
    )
    result = runner.invoke(main, ["simulate", "--config", config])
    assert result.exit_code == 2
    assert "T" in result.output


def test_missing_config_file_exits_with_input_error(runner, tmp_path):
    result = runner.invoke(main, ["identify", "--config", str(tmp_path / "absent.json")])
    assert result.exit_code == 2


def test_identify_ridge(runner, tmp_path, trajectory_file):
    result, out = _identify(
        runner,
        tmp_path,
        {"method": "ridge", "data": {"trajectory": trajectory_file.name}, "hyperparams": {"gamma": 1.0}},
    )
    assert result.exit_code == 0, result.output
    record = json.loads(out.read_text())
    assert record["method"] == "ridge"
    assert record["schema_version"] == 1
    assert record["library"]["name"] == "linsysid"
    assert record["result"]["A"][0][0] == pytest.approx(0.625 / 2.25)
    assert record["config"]["data"]["trajectory"] == "trajectory.csv"


def test_identify_ground_truth_error(runner, tmp_path, trajectory_file):
    result, out = _identify(
        runner,
        tmp_path,
        {"method": "ls", "data": {"trajectory": trajectory_file.name}, "ground_truth": [[0.5]]},
    )
    assert result.exit_code == 0, result.output
    record = json.loads(out.read_text())
    assert record["result"]["A"][0][0] == pytest.approx(0.5)
    assert record["error_vs_ground_truth"] == pytest.approx(0.0, abs=1e-14)


def test_identify_altmin_zero_data(runner, tmp_path):
    path, _ = DataFileIO().write_observations(
        ObservedData([0.0], [[1.0]], [[0.0], [0.0]]), tmp_path / "zero.csv"
    )
    result, out = _identify(runner, tmp_path, {"method": "altmin", "data": {"observations": path.name}})
    assert result.exit_code == 0, result.output
    record = json.loads(out.read_text())
    assert record["result"]["A"] == [[0.0]]
    assert record["result"]["converged"] is True


def test_identify_altmin_max_iters_exits_not_converged(runner, tmp_path, observations_file):
    result, out = _identify(
        runner,
        tmp_path,
        {
            "method": "altmin",
            "data": {"observations": observations_file.name},
            "hyperparams": {"gamma": 10.0, "mu": 10.0, "max_iters": 1},
        },
    )
    assert result.exit_code == 3
    record = json.loads(out.read_text())
    assert record["result"]["report"]["termination"] == "max_iters"


def test_identify_is_deterministic(runner, tmp_path, observations_file):
    content = {
        "method": "pgd",
        "data": {"observations": observations_file.name},
        "hyperparams": {"max_iters": 200, "restarts": 1, "seed": 5},
    }
    first, first_out = _identify(runner, tmp_path, content, name="first")
    second, second_out = _identify(runner, tmp_path, content, name="second")
    assert first.exit_code == second.exit_code

    records = [json.loads(path.read_text()) for path in (first_out, second_out)]
    for record in records:
        record.pop("wall_clock")
    assert json.dumps(records[0], sort_keys=True) == json.dumps(records[1], sort_keys=True)


def test_identify_silverman_and_realize(runner, tmp_path):
    config = _write_config(
        tmp_path / "simulate.json",
        {
            "schema_version": 1,
            "method": "simulate",
            "system": {**SCALAR_SYSTEM, "B": [[1.0]]},
            "options": {"markov_count": 12},
        },
    )
    assert runner.invoke(main, ["simulate", "--config", config, "--out", str(tmp_path)]).exit_code == 0

    result, out = _identify(
        runner,
        tmp_path,
        {"method": "silverman", "data": {"impulse_response": "impulse_response.json"}},
        name="silverman",
    )
    assert result.exit_code == 0, result.output
    assert json.loads(out.read_text())["result"]["order"] == 1

    result, out = _identify(
        runner,
        tmp_path,
        {"method": "realize", "data": {"impulse_response": "impulse_response.json"}},
        name="realize",
    )
    assert result.exit_code == 0, result.output
    realized = json.loads(out.read_text())["result"]
    assert realized["order"] == 1
    assert realized["A"][0][0] == pytest.approx(0.5)
    assert realized["markov_mismatch"] <= 1e-12


def test_report_needs_records(runner):
    result = runner.invoke(main, ["report"])
    assert result.exit_code == 2


def test_sweep_and_report(runner, tmp_path, trajectory_file):
    config = _write_config(
        tmp_path / "sweep.json",
        {
            "schema_version": 1,
            "method": "ridge",
            "data": {"trajectory": trajectory_file.name},
            "sweep": {"gamma": [10.0, 0.1, 1.0]},
            "ground_truth": [[0.5]],
        },
    )
    out = tmp_path / "records" / "ridge.json"
    result = runner.invoke(main, ["identify", "--config", config, "--out", str(out)])
    assert result.exit_code == 0, result.output
    records = sorted((tmp_path / "records").glob("ridge-*.json"))
    assert [path.name for path in records] == ["ridge-000.json", "ridge-001.json", "ridge-002.json"]

    table_path = tmp_path / "table.csv"
    result = runner.invoke(
        main, ["report", *[str(path) for path in records], "--out", str(table_path)]
    )
    assert result.exit_code == 0, result.output
    table = pd.read_csv(table_path)
    assert list(table.columns[:7]) == ["method", "gamma", "mu", "rho", "error", "iterations", "residual"]
    assert table["gamma"].tolist() == [0.1, 1.0, 10.0]
    expected = [0.625 / (1.0 / gamma + 1.25) for gamma in (0.1, 1.0, 10.0)]
    np.testing.assert_allclose(table["a1_1"], expected)
    np.testing.assert_allclose(table["error"], np.abs(np.array(expected) - 0.5))


def test_identify_altmin_writes_gains(runner, tmp_path, observations_file):
    result, out = _identify(
        runner,
        tmp_path,
        {
            "method": "altmin",
            "data": {"observations": observations_file.name},
            "hyperparams": {"gamma": 10.0, "mu": 10.0},
            "options": {"dump_gains": "gains/altmin.json"},
        },
    )
    assert result.exit_code == 0, result.output
    record = json.loads(out.read_text())
    gains_path = tmp_path / "gains" / "altmin.json"
    assert record["result"]["gains_file"] == str(gains_path.resolve())

    gains = json.loads(gains_path.read_text())
    assert len(gains["Sigma"]) == 3
    assert gains["Sigma"][0] == [[0.0]]
    # Σ_2 = AΣ_1A* + I/γ with Σ_1 = 0
    assert gains["Sigma"][1][0][0] == pytest.approx(0.1)
    assert gains["r"][0] == [1.0]


def test_report_leaves_gamma_empty_for_methods_without_penalty(runner, tmp_path):
    io = DataFileIO()
    hyperparams = {"gamma": 1.0, "mu": 1.0}
    records = [
        {"method": "ls", "result": {"A": [[0.5]], "gamma": None}},
        {"method": "silverman", "result": {"order": 1}},
        {"method": "ridge", "result": {"A": [[0.25]], "gamma": 4.0}},
    ]
    paths = [
        str(io.write_json({"schema_version": 1, "hyperparams": hyperparams, **record}, tmp_path / name))
        for name, record in zip(("ls.json", "silverman.json", "ridge.json"), records)
    ]
    table_path = tmp_path / "table.csv"
    result = runner.invoke(main, ["report", *paths, "--out", str(table_path)])
    assert result.exit_code == 0, result.output

    table = pd.read_csv(table_path)
    assert table["method"].tolist() == ["ridge", "ls", "silverman"]
    assert table["gamma"].iloc[0] == 4.0
    assert table["gamma"].iloc[1:].isna().all()
    assert table["mu"].isna().all()
