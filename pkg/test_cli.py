import json

import numpy as np
import pytest
from click.testing import CliRunner

from src.cli import cli
from src.fixtures import DEFAULT_FIXTURE_MODEL
from src.markov import load_model, save_model


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(save_model(DEFAULT_FIXTURE_MODEL), encoding="utf-8")
    return path


def invoke(runner, *args):
    return runner.invoke(cli, [str(arg) for arg in args])


def test_fixture_and_ingest_write_manifests(runner, tmp_path):
    events = tmp_path / "events.csv"
    states = tmp_path / "states.csv"
    assert invoke(runner, "fixture", "--out", events, "--days", 14, "--seed", 3).exit_code == 0
    result = invoke(
        runner, "ingest", events, "--out", states,
        "--first", "2013-10-01T00:00:00", "--last", "2013-10-14T23:00:00",
    )
    assert result.exit_code == 0, result.output

    lines = states.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "hour,state"
    assert len(lines) == 1 + 14 * 24
    manifest = json.loads((tmp_path / "states.csv.manifest.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "ingest"
    assert manifest["inputs"][0]["path"] == str(events)
    assert manifest["outputs"][0]["path"] == str(states)


def test_ingest_missing_file_is_io_error(runner, tmp_path):
    result = invoke(runner, "ingest", tmp_path / "absent.csv", "--out", tmp_path / "states.csv")
    assert result.exit_code == 3


def test_ingest_corrupt_line_is_input_error(runner, tmp_path):
    events = tmp_path / "events.csv"
    lines = ["timestamp,value"] + [f"2013-10-01T1{i}:00:00,{i % 2}" for i in range(5)] + ["2013-10-01T16:00:00,maybe"]
    events.write_text("\n".join(lines) + "\n", encoding="utf-8")
    result = invoke(runner, "ingest", events, "--out", tmp_path / "states.csv")
    assert result.exit_code == 2
    assert "строка 7" in result.output


def test_default_output_folder_from_environment(runner, output_folder):
    result = invoke(runner, "fixture", "--days", 2)
    assert result.exit_code == 0
    assert (output_folder / "fixture_events.csv").exists()
    assert (output_folder / "fixture_events.csv.manifest.json").exists()


def test_fit_writes_row_stochastic_model(runner, tmp_path, model_file):
    states = tmp_path / "states.csv"
    assert invoke(runner, "simulate", "--model", model_file, "--seed", 0, "--out", states).exit_code == 0
    out = tmp_path / "fitted.json"
    assert invoke(runner, "fit", states, "--out", out).exit_code == 0
    model = load_model(out.read_text(encoding="utf-8"))
    np.testing.assert_allclose(model.tm_working.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(model.tm_lunch.sum(axis=1), 1.0, atol=1e-9)


def test_refit_recovers_working_matrix(runner, tmp_path, model_file):
    states = tmp_path / "states.csv"
    out = tmp_path / "fitted.json"
    assert invoke(runner, "simulate", "--model", model_file, "--seed", 0, "--days", 60, "--out", states).exit_code == 0
    assert invoke(runner, "fit", states, "--out", out).exit_code == 0
    fitted = load_model(out.read_text(encoding="utf-8"))
    assert np.max(np.abs(fitted.tm_working - DEFAULT_FIXTURE_MODEL.tm_working)) <= 0.15


def test_fit_one_hour_is_input_error(runner, tmp_path):
    states = tmp_path / "states.csv"
    states.write_text("hour,state\n2013-10-01T10:00:00,open\n", encoding="utf-8")
    assert invoke(runner, "fit", states, "--out", tmp_path / "model.json").exit_code == 2


def test_simulate_same_seed_is_byte_identical(runner, tmp_path, model_file):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert invoke(runner, "simulate", "--model", model_file, "--seed", 1, "--out", a).exit_code == 0
    assert invoke(runner, "simulate", "--model", model_file, "--seed", 1, "--out", b).exit_code == 0
    assert a.read_bytes() == b.read_bytes()


def test_group_agent_engine_matches_markov_engine(runner, tmp_path, model_file):
    markov, group = tmp_path / "markov.csv", tmp_path / "group.csv"
    assert invoke(runner, "simulate", "--model", model_file, "--seed", 1, "--days", 14, "--out", markov).exit_code == 0
    result = invoke(runner, "simulate", "--model", model_file, "--engine", "group-agent", "--seed", 1, "--days", 14, "--out", group)
    assert result.exit_code == 0, result.output
    assert markov.read_bytes() == group.read_bytes()
    assert (tmp_path / "group.trace.jsonl").exists()


def test_simulate_without_model_is_input_error(runner, tmp_path):
    assert invoke(runner, "simulate", "--out", tmp_path / "x.csv").exit_code == 2


def test_simulate_invalid_model_is_input_error(runner, tmp_path):
    model = tmp_path / "model.json"
    model.write_text('{"tm_working": [[1, 0, 0]]}', encoding="utf-8")
    assert invoke(runner, "simulate", "--model", model, "--out", tmp_path / "x.csv").exit_code == 2


def test_scenario_engine_writes_trace_and_closed_nights(runner, tmp_path):
    states = tmp_path / "scenario.csv"
    trace = tmp_path / "scenario.jsonl"
    door_log = tmp_path / "door.csv"
    result = invoke(
        runner, "simulate", "--engine", "scenario", "--seed", 7, "--days", 7,
        "--out", states, "--trace", trace, "--door-log", door_log,
    )
    assert result.exit_code == 0, result.output
    assert trace.read_text(encoding="utf-8").strip()
    assert door_log.read_text(encoding="utf-8").startswith("timestamp,value\n")
    for line in states.read_text(encoding="utf-8").splitlines()[1:]:
        hour, state = line.split(",")
        if int(hour[11:13]) < 8 or int(hour[11:13]) >= 20:
            assert state == "closed"


def test_scenario_config_with_unknown_key_is_input_error(runner, tmp_path):
    config = tmp_path / "scenario.json"
    config.write_text('{"visitor_rate": 1, "coffee_machine": true}', encoding="utf-8")
    result = invoke(runner, "simulate", "--engine", "scenario", "--config", config, "--days", 1, "--out", tmp_path / "s.csv")
    assert result.exit_code == 2
    assert "coffee_machine" in result.output


def test_compare_file_with_itself(runner, tmp_path, model_file):
    states = tmp_path / "states.csv"
    report = tmp_path / "report.json"
    assert invoke(runner, "simulate", "--model", model_file, "--days", 7, "--out", states).exit_code == 0
    result = invoke(runner, "compare", states, "--markov", states, "--out", report)
    assert result.exit_code == 0, result.output
    data = json.loads(report.read_text(encoding="utf-8"))
    assert data["state_match_rate"]["recorded-markov"] == 1.0
    assert data["seeds"]["markov"] == [0]
    assert (tmp_path / "report.profile.csv").read_text(encoding="utf-8").startswith("hour,recorded,markov,agent\n")


def test_compare_misaligned_ranges_is_input_error(runner, tmp_path, model_file):
    week, fortnight = tmp_path / "week.csv", tmp_path / "fortnight.csv"
    assert invoke(runner, "simulate", "--model", model_file, "--days", 7, "--out", week).exit_code == 0
    assert invoke(runner, "simulate", "--model", model_file, "--days", 14, "--out", fortnight).exit_code == 0
    assert invoke(runner, "compare", week, "--markov", fortnight, "--out", tmp_path / "r.json").exit_code == 2


def test_compare_markov_against_scenario_is_finite(runner, tmp_path, model_file):
    markov, scenario, report = tmp_path / "m.csv", tmp_path / "s.csv", tmp_path / "r.json"
    assert invoke(runner, "simulate", "--model", model_file, "--seed", 7, "--days", 14, "--out", markov).exit_code == 0
    assert invoke(runner, "simulate", "--engine", "scenario", "--seed", 7, "--days", 14, "--out", scenario).exit_code == 0
    assert invoke(runner, "compare", markov, "--agent", scenario, "--out", report).exit_code == 0
    data = json.loads(report.read_text(encoding="utf-8"))
    values = list(data["state_match_rate"].values()) + list(data["profile_tvd"].values())
    values += [v for slots in data["tm_max_dev"].values() for v in slots.values()]
    assert values and all(np.isfinite(values))


def test_rerun_reproduces_scenario_run(runner, tmp_path):
    states = tmp_path / "scenario.csv"
    assert invoke(runner, "simulate", "--engine", "scenario", "--seed", 2, "--days", 3, "--out", states).exit_code == 0
    result = invoke(runner, "rerun", f"{states}.manifest.json")
    assert result.exit_code == 0, result.output


def test_rerun_detects_changed_input(runner, tmp_path, model_file):
    states = tmp_path / "states.csv"
    assert invoke(runner, "simulate", "--model", model_file, "--days", 2, "--out", states).exit_code == 0
    model_file.write_text(model_file.read_text(encoding="utf-8") + "\n", encoding="utf-8")
    assert invoke(runner, "rerun", f"{states}.manifest.json").exit_code == 2
