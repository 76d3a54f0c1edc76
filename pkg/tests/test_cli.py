"""
End-to-end tests for the plsdof command line
"""

import io
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from jsonschema import Draft202012Validator
from numpy.testing import assert_allclose

from plsdof import cli
from plsdof.cli import main
from plsdof.dataprep import save_csv
from plsdof.errors import SingularBasis

from sample_data import noise_only_instance, rank_deficient_instance, tall_instance


@pytest.fixture
def tall_csv(tmp_path):
    path = tmp_path / "tall.csv"
    save_csv(tall_instance(50, n=60, p=4), str(path))
    return str(path)


@pytest.fixture
def noise_csv(tmp_path):
    path = tmp_path / "noise.csv"
    save_csv(noise_only_instance(), str(path))
    return str(path)


def run_json(capsys, argv):
    assert main(argv) == 0
    return json.loads(capsys.readouterr().out)


# ============================================================================
# FIT
# ============================================================================

def test_make_data_then_fit(tmp_path, capsys):
    data_path = str(tmp_path / "noise.csv")
    assert main(["make-data", "--kind", "noise", "--rows", "30", "--p", "5", "--output", data_path]) == 0
    assert "Wrote" in capsys.readouterr().err

    document = run_json(capsys, ["fit", "--input", data_path, "--m-max", "5"])
    assert document["n"] == 30
    assert len(document["path"]) == 6
    assert all(len(entry["coefficients"]) == 5 for entry in document["path"])
    rss = [entry["rss"] for entry in document["path"]]
    assert all(later <= earlier + 1e-9 for earlier, later in zip(rss, rss[1:]))


def test_fit_mean_model(tall_csv, capsys):
    document = run_json(capsys, ["fit", "--input", tall_csv, "--m-max", "0"])
    (entry,) = document["path"]
    y = pd.read_csv(tall_csv)["y"].to_numpy()
    assert entry["coefficients"] == [0.0, 0.0, 0.0, 0.0]
    assert_allclose(entry["intercept"], y.mean())


def test_fit_csv_output(tall_csv, tmp_path):
    out = str(tmp_path / "fit.csv")
    assert main(["fit", "--input", tall_csv, "--m-max", "2", "--format", "csv", "--output", out]) == 0
    frame = pd.read_csv(out)
    assert frame.columns.tolist() == ["m", "rss", "intercept", "x1", "x2", "x3", "x4"]
    assert frame["m"].tolist() == [0, 1, 2]


def test_missing_input_file(tmp_path, capsys):
    assert main(["fit", "--input", str(tmp_path / "absent.csv")]) == 2
    assert "Error" in capsys.readouterr().err


def test_missing_target_column(tall_csv, capsys):
    assert main(["fit", "--input", tall_csv, "--target", "response"]) == 2
    assert "MissingTarget" in capsys.readouterr().err


def test_m_max_out_of_range(tall_csv, capsys):
    assert main(["fit", "--input", tall_csv, "--m-max", "9"]) == 2
    assert "ComponentOutOfRange" in capsys.readouterr().err


def test_bad_arguments_exit_with_usage_code(capsys):
    assert main(["fit", "--m-max", "-1"]) == 2
    assert main([]) == 2


def test_repeated_runs_survive_a_closed_stderr(tmp_path, monkeypatch):
    first = io.StringIO()
    monkeypatch.setattr(sys, "stderr", first)
    assert main(["fit", "--json-schema"]) == 0
    first.close()

    second = io.StringIO()
    monkeypatch.setattr(sys, "stderr", second)
    assert main(["fit", "--input", str(tmp_path / "absent.csv")]) == 2
    assert "❌ Error" in second.getvalue()


# ============================================================================
# DOF
# ============================================================================

def test_dof_engines_agree(tall_csv, capsys):
    document = run_json(capsys, ["dof", "--input", tall_csv, "--m-max", "2", "--engine", "both"])
    assert document["max_disagreement"] < 1e-6
    assert [row["m"] for row in document["rows"]] == [0, 1, 2]
    assert document["rows"][0]["dof_lanczos"] == 1.0
    assert "lower_bound" not in document


def test_dof_naive_engine(tall_csv, capsys):
    document = run_json(capsys, ["dof", "--input", tall_csv, "--engine", "naive"])
    assert [row["dof"] for row in document["rows"]] == [1.0, 2.0, 3.0, 4.0, 5.0]


def test_dof_lower_bound(tall_csv, capsys):
    document = run_json(capsys, ["dof", "--input", tall_csv, "--m-max", "1",
                                 "--engine", "lanczos", "--lower-bound"])
    assert 0.0 <= document["mean_abs_correlation"] <= 1.0
    if document["lower_bound"] is not None:
        assert document["rows"][1]["dof"] >= document["lower_bound"] - 1e-6


def test_dof_reports_degenerate_components(tmp_path, capsys):
    path = str(tmp_path / "deficient.csv")
    save_csv(rank_deficient_instance(), path)
    assert main(["dof", "--input", path, "--engine", "both"]) == 0
    captured = capsys.readouterr()
    assert len(json.loads(captured.out)["rows"]) == 5
    assert "DegenerateComponent" in captured.err


# ============================================================================
# SELECT
# ============================================================================

def test_select_noise_only_keeps_mean_model(noise_csv, capsys):
    document = run_json(capsys, ["select", "--input", noise_csv, "--method", "bic-krylov"])
    assert document["chosen_m"] == 0
    assert document["method"] == "KRYLOV"
    assert document["table"]["rows"][0]["dof"] == 1.0


def test_select_cv_is_deterministic(tall_csv, tmp_path):
    outputs = []
    for name in ("first.json", "second.json"):
        out = tmp_path / name
        argv = ["select", "--input", tall_csv, "--method", "cv", "--folds", "5", "--seed", "3",
                "--output", str(out)]
        assert main(argv) == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]


def test_select_with_holdout(tall_csv, tmp_path, capsys):
    test_path = str(tmp_path / "holdout.csv")
    save_csv(tall_instance(51, n=20, p=4), test_path)
    document = run_json(capsys, ["select", "--input", tall_csv, "--method", "bic-naive",
                                 "--test", test_path])
    assert document["test_mse"] >= 0.0
    assert document["chosen_dof"] == document["chosen_m"] + 1


def test_naive_bic_keeps_at_least_as_many_components(tmp_path, capsys):
    data_path = str(tmp_path / "rbf.csv")
    assert main(["make-data", "--kind", "rbf", "--rows", "50", "--p", "12", "--d", "90",
                 "--seed", "2024", "--output", data_path]) == 0
    capsys.readouterr()
    chosen = {}
    for method in ("bic-naive", "bic-krylov"):
        document = run_json(capsys, ["select", "--input", data_path, "--method", method, "--m-max", "30"])
        chosen[method] = document["chosen_m"]
    assert chosen["bic-naive"] >= chosen["bic-krylov"]


def test_global_minimum_option_takes_the_smallest_criterion(tall_csv, capsys):
    document = run_json(capsys, ["select", "--input", tall_csv, "--method", "bic-lanczos",
                                 "--minimum", "global"])
    scores = [(row["criterion_value"], row["m"]) for row in document["table"]["rows"] if row["valid"]]
    assert document["chosen_m"] == min(scores)[1]


def test_numerical_failure_exit_code(tall_csv, capsys, monkeypatch):
    def failing_select(*args, **kwargs):
        raise SingularBasis(2, 1e13)

    monkeypatch.setattr(cli, "select", failing_select)
    assert main(["select", "--input", tall_csv]) == 3
    assert "SingularBasis" in capsys.readouterr().err


# ============================================================================
# COMPARE AND SIMULATE
# ============================================================================

def test_compare_json(tall_csv, capsys):
    document = run_json(capsys, ["compare", "--input", tall_csv, "--reps", "2", "--n-train", "30",
                                 "--n-test", "20", "--folds", "5", "--seed", "1"])
    assert len(document["methods"]) == 6
    assert document["config"]["reps"] == 2
    assert {row["method"] for row in document["curves"]} == {"PLS", "PCR"}


def test_compare_csv_files(tall_csv, tmp_path):
    prefix = str(tmp_path / "cmp")
    assert main(["compare", "--input", tall_csv, "--reps", "1", "--n-train", "30", "--folds", "5",
                 "--lambdas", "0.1,1,10", "--format", "csv", "--output", prefix]) == 0
    assert len(pd.read_csv(prefix + "_methods.csv")) == 3
    assert not pd.read_csv(prefix + "_curves.csv").empty


def test_compare_split_too_large(tall_csv, capsys):
    assert main(["compare", "--input", tall_csv, "--n-train", "50", "--n-test", "20"]) == 2


def _simulate(prefix, *extra):
    return main(["simulate", "--d", "10", "--reps", "1", "--m-range", "4", "--folds", "5",
                 "--seed", "8", "--output", prefix, *extra])


def test_simulate_writes_reproducible_files(tmp_path):
    first, second = str(tmp_path / "one"), str(tmp_path / "two")
    curves = str(tmp_path / "curves.csv")
    assert _simulate(first, "--curves", curves) == 0
    assert _simulate(second) == 0

    frame = pd.read_csv(first + ".csv")
    assert len(frame) == 4
    assert frame["method"].tolist() == ["CV", "LANCZOS", "KRYLOV", "NAIVE"]
    assert (tmp_path / "one.csv").read_bytes() == (tmp_path / "two.csv").read_bytes()
    assert json.loads((tmp_path / "one.json").read_text())["config"]["d_values"] == [10]
    assert np.isclose(pd.read_csv(curves)["scaled_error"].min(), 1.0)


def test_simulate_config_file(tmp_path, capsys):
    settings = tmp_path / "sim.env"
    settings.write_text("D_VALUES=10\nREPS=1\nM_RANGE=3\nFOLDS=5\n", encoding="utf-8")
    document = run_json(capsys, ["simulate", "--config", str(settings), "--timings"])
    assert len(document["rows"]) == 4
    assert "runtime" in document["rows"][0]


def test_simulate_rejects_bad_config(tmp_path, capsys):
    settings = tmp_path / "sim.env"
    settings.write_text("REPS=0\n", encoding="utf-8")
    assert main(["simulate", "--config", str(settings)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "absent.env")]) == 2


# ============================================================================
# SCHEMAS
# ============================================================================

@pytest.mark.parametrize("command", cli.SCHEMA_COMMANDS)
def test_json_schema(command, capsys):
    assert main([command, "--json-schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert schema["type"] == "object"
    assert schema["title"].startswith("plsdof " + command)


def test_make_data_has_no_schema(capsys):
    assert main(["make-data", "--json-schema"]) == 2


SCHEMA_RUNS = [
    ("fit", ["--m-max", "3"]),
    ("dof", ["--m-max", "2", "--engine", "both", "--lower-bound"]),
    ("dof", ["--engine", "krylov"]),
    ("select", ["--method", "cv", "--folds", "5"]),
    ("select", ["--method", "bic-lanczos"]),
    ("compare", ["--reps", "1", "--n-train", "30", "--n-test", "20", "--folds", "5"]),
]


@pytest.mark.parametrize("command,extra", SCHEMA_RUNS)
def test_output_validates_against_schema(command, extra, tall_csv, capsys):
    document = run_json(capsys, [command, "--input", tall_csv, *extra])
    schema = json.loads((Path(cli.SCHEMA_DIR) / f"{command}.schema.json").read_text(encoding="utf-8"))
    Draft202012Validator(schema).validate(document)


def test_simulate_output_validates_against_schema(capsys):
    document = run_json(capsys, ["simulate", "--d", "10", "--reps", "1", "--m-range", "3",
                                 "--folds", "5", "--timings"])
    schema = json.loads((Path(cli.SCHEMA_DIR) / "simulate.schema.json").read_text(encoding="utf-8"))
    Draft202012Validator(schema).validate(document)
