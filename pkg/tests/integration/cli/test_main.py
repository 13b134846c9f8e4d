import json

import pandas as pd
import pytest

from pyregime import cli


@pytest.fixture
def run(capsys):
    def run_(*argv):
        exit_code = cli.main([str(arg) for arg in argv])
        captured = capsys.readouterr()
        return exit_code, captured.out, captured.err

    return run_


@pytest.fixture
def write_config(tmp_path):
    def factory(name="run.cfg", **values):
        file = tmp_path / name
        file.write_text("".join(f"{key}={value}\n" for key, value in values.items()))
        return str(file)

    return factory


@pytest.fixture
def chain_data(run, tmp_path, write_config):
    config = write_config(
        "simulate.cfg", env="chain", chain_states=4, chain_success=1.0
    )
    prefix = tmp_path / "chain"
    exit_code, out, _ = run(
        "simulate", "--config", config, "--n", 12, "--stages", 8, "--out", prefix
    )
    assert exit_code == 0
    record = json.loads(out)
    assert record["num_trajectories"] == 12
    assert record["stages"] == 8
    states, actions, rewards = record["files"]
    return ["--data", states, "--actions", actions, "--rewards", rewards, "--n", 12]


def last_record(out):
    return json.loads(out.strip().splitlines()[-1])


def test_main_version(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--version"])
    assert "pyregime" in capsys.readouterr().out


def test_main_unknown_command(capsys):
    with pytest.raises(SystemExit):
        cli.main(["train"])


def test_simulate_glucose(run, tmp_path):
    prefix = tmp_path / "glucose"
    exit_code, out, _ = run(
        "simulate", "--n", 3, "--stages", 5, "--seed", 1, "--out", prefix
    )
    assert exit_code == 0
    record = json.loads(out)
    assert record["tool"] == "pyregime"
    assert len(record["config_hash"]) == 16
    states = pd.read_csv(record["files"][0])
    assert list(states.columns) == ["glucose", "activity", "carbs"]
    assert len(states) == 3 * 6
    assert len(pd.read_csv(record["files"][1])) == 3 * 5


def test_simulate_deterministic(run, tmp_path):
    files = []
    for name in ("first", "second"):
        _, out, _ = run(
            "simulate", "--n", 2, "--stages", 4, "--seed", 5, "--out", tmp_path / name
        )
        files.append(json.loads(out)["files"])
    for first, second in zip(*files):
        with open(first) as fh1, open(second) as fh2:
            assert fh1.read() == fh2.read()


def test_validate(run, chain_data):
    exit_code, out, _ = run("validate", *chain_data)
    assert exit_code == 0
    record = last_record(out)
    assert record["num_trajectories"] == 12
    assert record["num_transitions"] == 12 * 8
    assert set(record["report"].keys()) == {
        "action_frequencies",
        "unobserved_actions",
        "warnings",
    }
    assert sum(record["report"]["action_frequencies"]) == pytest.approx(1.0)


def test_validate_missing_files(run):
    exit_code, _, err = run("validate", "--n", 2)
    assert exit_code == 1
    assert "error" in err


def test_validate_bad_file(run, chain_data, tmp_path):
    bad = tmp_path / "bad_actions.csv"
    bad.write_text("A\n0\nx\n")
    args = list(chain_data)
    args[args.index("--actions") + 1] = bad
    exit_code, _, err = run("validate", *args)
    assert exit_code == 1
    assert "non-numeric" in err


def test_invalid_config(run, chain_data, write_config):
    config = write_config(method="td_on", lambda_grid="0.1")
    exit_code, _, err = run("validate", "--config", config, *chain_data)
    assert exit_code == 1
    assert "lambda_grid" in err


def test_fit_predict_pt(run, chain_data, write_config, tmp_path):
    config = write_config(method="pt", basis="tabular", lambda_grid="0.5")
    model = tmp_path / "pt.json"
    exit_code, out, _ = run(
        "fit", "--config", config, *chain_data, "--out", model
    )
    assert exit_code == 0
    assert last_record(out)["model"] == str(model)

    artifact = json.loads(model.read_text())
    assert artifact["method"] == "pt"
    assert artifact["diagnostics"]["lambda"] == pytest.approx(0.5)
    assert "temporal_consistency" in artifact["diagnostics"]["loss_terms"]
    for key in ("tool", "version", "config_hash", "config", "basis", "parameters"):
        assert key in artifact

    exit_code, out, _ = run("predict", "--model", model, "--state", "0")
    assert exit_code == 0
    record = last_record(out)
    assert record["method"] == "pt"
    assert len(record["prob"]) == 2
    assert sum(record["prob"]) == pytest.approx(1.0)
    assert record["recommend_trt"] in (1, 2)
    # moving right towards the goal is optimal
    assert record["recommend_trt"] == 2
    assert "value" in record


def test_fit_backward_induction_full_history(run, write_config, tmp_path):
    simulate = write_config("simulate.cfg", env="chain", chain_states=4)
    exit_code, out, _ = run(
        "simulate", "--config", simulate, "--n", 60, "--stages", 2,
        "--out", tmp_path / "short",
    )
    assert exit_code == 0
    states, actions, rewards = json.loads(out)["files"]
    data = ["--data", states, "--actions", actions, "--rewards", rewards, "--n", 60]

    for name, values in (("default", {}), ("full", {"window": "full"})):
        config = write_config(
            f"{name}.cfg", method="backward_induction", basis="tabular", **values
        )
        model = tmp_path / f"{name}.json"
        exit_code, _, _ = run("fit", "--config", config, *data, "--out", model)
        assert exit_code == 0

        artifact = json.loads(model.read_text())
        assert artifact["parameters"]["window"] is None
        assert len(artifact["parameters"]["rules"]) == 2


def test_fit_deterministic(run, chain_data, write_config, tmp_path):
    config = write_config(method="ggq", basis="tabular")
    contents = []
    for name in ("first.json", "second.json"):
        model = tmp_path / name
        run("fit", "--config", config, *chain_data, "--out", model)
        contents.append(model.read_text())
    assert contents[0] == contents[1]


def test_predict_value_method(run, chain_data, write_config, tmp_path):
    config = write_config(method="td_on", basis="tabular", epochs=3)
    model = tmp_path / "td.json"
    exit_code, _, _ = run("fit", "--config", config, *chain_data, "--out", model)
    assert exit_code in (0, 2)

    exit_code, out, _ = run("predict", "--model", model, "--state", "1")
    assert exit_code == 0
    record = last_record(out)
    assert "value" in record
    assert "prob" not in record
    assert "recommend_trt" not in record

    exit_code, _, err = run("evaluate", "--model", model, "--m", 5)
    assert exit_code == 1
    assert "no policy" in err


def test_predict_state_dimension(run, chain_data, write_config, tmp_path):
    config = write_config(method="ggq", basis="tabular")
    model = tmp_path / "ggq.json"
    run("fit", "--config", config, *chain_data, "--out", model)
    exit_code, _, err = run("predict", "--model", model, "--state", "1,2")
    assert exit_code == 1
    assert "dimension" in err


def test_predict_not_a_model(run, tmp_path):
    file = tmp_path / "model.json"
    file.write_text(json.dumps({"tool": "other"}))
    exit_code, _, _ = run("predict", "--model", file, "--state", "1")
    assert exit_code == 1


def test_fit_not_converged(run, chain_data, write_config, tmp_path):
    config = write_config(method="rg", basis="tabular", max_iter=1)
    model = tmp_path / "rg.json"
    exit_code, _, err = run("fit", "--config", config, *chain_data, "--out", model)
    assert exit_code == 2
    assert "ConvergenceWarning" in err
    assert model.exists()
    artifact = json.loads(model.read_text())
    assert not artifact["diagnostics"]["converged"]
    assert artifact["diagnostics"]["warnings"]


def test_evaluate_pt(run, chain_data, write_config, tmp_path):
    config = write_config(method="pt", basis="tabular", lambda_grid="0.5")
    model = tmp_path / "pt.json"
    run("fit", "--config", config, *chain_data, "--out", model)

    eval_config = write_config(
        "evaluate.cfg", method="pt", env="chain", chain_states=4, chain_success=1.0
    )
    report = tmp_path / "evaluation.csv"
    exit_code, out, _ = run(
        "evaluate", "--config", eval_config, "--model", model, "--m", 20,
        "--out", report,
    )
    assert exit_code == 0
    assert "learned" in out

    frame = pd.read_csv(report)
    assert frame["policy"].tolist() == ["learned", "behavior", "uniform"]
    assert frame.loc[1, "improvement"] == pytest.approx(0.0)
    assert not pd.isna(frame.loc[0, "value_lower_bound"])
    assert frame.loc[0, "value_lower_bound"] <= frame.loc[0, "mean"] + 1e-9


def test_evaluate_environment_mismatch(run, chain_data, write_config, tmp_path):
    config = write_config(method="ggq", basis="tabular")
    model = tmp_path / "ggq.json"
    run("fit", "--config", config, *chain_data, "--out", model)
    exit_code, _, err = run(
        "evaluate", "--model", model, "--m", 5, "--out", tmp_path / "eval.csv"
    )
    assert exit_code == 1
    assert "environment" in err


def test_export(run, chain_data, tmp_path):
    prefix = tmp_path / "exported"
    exit_code, out, _ = run("export", *chain_data, "--out", prefix)
    assert exit_code == 0
    states, actions, _ = last_record(out)["files"]
    original = chain_data[chain_data.index("--data") + 1]
    pd.testing.assert_frame_equal(pd.read_csv(states), pd.read_csv(original))
    assert len(pd.read_csv(actions)) == 12 * 8
