import csv
import json

import numpy as np
import pytest

from shapdec.cli import main, read_csv
from shapdec.core import RngStream
from shapdec.errors import IngestionError


def _write_csv(path, header, rows):
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


@pytest.fixture
def housing_csv(tmp_path):
    gen = RngStream(0).generator()
    cov = np.array([[1.0, 0.6, 0.0], [0.6, 1.0, 0.2], [0.0, 0.2, 1.0]])
    x = gen.multivariate_normal(np.zeros(3), cov, size=120)
    y = x @ np.array([1.0, -2.0, 0.5]) + gen.normal(0, 0.1, 120)
    path = tmp_path / "data.csv"
    _write_csv(
        path, ["a", "b", "c", "price"], np.column_stack([x, y]).round(6).tolist()
    )
    return path


def test_read_csv_roundtrip(tmp_path):
    path = tmp_path / "small.csv"
    _write_csv(path, ["x", "y"], [[1.0, 2.0], [3.0, 4.0]])
    data, target = read_csv(path, "y")
    assert data.names == ("x",)
    assert np.allclose(target, [2.0, 4.0])


def test_read_csv_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,oops\n")
    with pytest.raises(IngestionError):
        read_csv(path)
    with pytest.raises(IngestionError):
        read_csv(tmp_path / "missing.csv")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(IngestionError):
        read_csv(empty)


def test_usage_error_exit_code():
    assert main(["explain"]) == 1
    assert main(["no-such-command"]) == 1


def test_ingestion_error_exit_code(tmp_path):
    missing = tmp_path / "nope.csv"
    code = main(
        ["explain", "--data", str(missing), "--fit", "linear", "--target", "y"]
    )
    assert code == 2


def test_computation_error_exit_code(tmp_path):
    # two identical rows leave OLS with fewer rows than features
    path = tmp_path / "tiny.csv"
    _write_csv(path, ["a", "b", "y"], [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
    code = main(
        ["explain", "--data", str(path), "--fit", "linear", "--target", "y"]
    )
    assert code == 3


def test_bad_threads_env_is_ingestion_error(tmp_path, monkeypatch, housing_csv):
    monkeypatch.setenv("SHAPDEC_THREADS", "many")
    out = tmp_path / "out"
    code = main(
        [
            "explain",
            "--data",
            str(housing_csv),
            "--fit",
            "linear",
            "--target",
            "price",
            "--k1",
            "50",
            "--k2",
            "50",
            "--out",
            str(out),
        ]
    )
    assert code == 2


def test_explain_end_to_end(tmp_path, housing_csv):
    out = tmp_path / "out"
    code = main(
        [
            "explain",
            "--data",
            str(housing_csv),
            "--fit",
            "linear",
            "--target",
            "price",
            "--row",
            "3",
            "--k1",
            "200",
            "--k2",
            "300",
            "--seed",
            "1",
            "--out",
            str(out),
            "--plot",
        ]
    )
    assert code == 0
    doc = json.loads((out / "decomposition.json").read_text())
    assert [f["name"] for f in doc["features"]] == ["a", "b", "c"]
    for f in doc["features"]:
        assert f["phi"] == pytest.approx(f["phi_int"] + f["phi_dep"], abs=1e-9)
    assert (out / "force.svg").read_text().startswith("<svg")


def test_fit_model_then_explain(tmp_path, housing_csv):
    model_path = tmp_path / "model.json"
    assert (
        main(
            [
                "fit-model",
                "linear",
                "--data",
                str(housing_csv),
                "--target",
                "price",
                "--out",
                str(model_path),
            ]
        )
        == 0
    )
    doc = json.loads(model_path.read_text())
    assert doc["kind"] == "linear"
    out = tmp_path / "out"
    code = main(
        [
            "explain",
            "--data",
            str(housing_csv),
            "--target",
            "price",
            "--model",
            str(model_path),
            "--sample",
            "1,0,-1,0",
            "--k1",
            "50",
            "--k2",
            "50",
            "--out",
            str(out),
        ]
    )
    # inline sample has 4 values but the model has 3 features + target column
    assert code == 2


def test_experiment_toy(tmp_path):
    out = tmp_path / "toy"
    code = main(
        ["experiment", "toy", "--k1", "300", "--k2", "300", "--out", str(out)]
    )
    assert code == 0
    doc = json.loads((out / "results.json").read_text())
    assert doc["exact"]["base"] == pytest.approx(0.5)


def _run_twice(argv, monkeypatch, threads):
    outputs = []
    for t in threads:
        monkeypatch.setenv("SHAPDEC_THREADS", t)
        assert main(argv) == 0
        outputs.append(
            {
                p.name: p.read_bytes()
                for p in sorted(argv_out(argv).iterdir())
                if p.suffix in (".json", ".svg", ".dot")
            }
        )
    return outputs


def argv_out(argv):
    from pathlib import Path

    return Path(argv[argv.index("--out") + 1])


def test_outputs_byte_identical_across_thread_counts(tmp_path, monkeypatch):
    out = tmp_path / "toy"
    argv = ["experiment", "toy", "--k1", "200", "--k2", "200", "--out", str(out)]
    first, second = _run_twice(argv, monkeypatch, ["1", "8"])
    assert first.keys() == second.keys()
    for name in first:
        assert first[name] == second[name], name
