import json

import numpy as np
import pytest

from dynprobit.cli import EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, DataError, load_csv, main


def write_config(tmp_path, **sections):
    cfg = {"model": {"n": 30, "p": 2, "G": 1, "W": 0.01, "P0": 3},
           "data": {"simulate": {"seed": 4}}, "output": {"dir": "out"}}
    cfg.update(sections)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def read_moments(path):
    return np.genfromtxt(path, delimiter=",", names=True)


def test_load_csv_intercept_only(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("y,x1\n1,1\n0,1\n1,1\n")
    y, X = load_csv(f)
    np.testing.assert_array_equal(y, [1, 0, 1])
    assert X.shape == (3, 1)


def test_load_csv_random_walk(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("y,x1,x2\n1,1,0\n0,1,1\n1,1,1\n")
    y, X = load_csv(f)
    assert X.shape == (3, 2) and set(X[:, 1]) <= {0.0, 1.0}


@pytest.mark.parametrize("body, message", [
    ("y,x1\n1,1\n0,1\n1,1\n0,1\n2,1\n", "row 5: y not in {0,1}"),
    ("x1\n1\n", "missing column 'y'"),
    ("y\n1\n", "missing column 'x1'"),
    ("y,x1\n1,\n", "row 1: column x1"),
    ("y,x1\n1,nan\n", "row 1: column x1 is not finite"),
])
def test_load_csv_errors(tmp_path, body, message):
    f = tmp_path / "d.csv"
    f.write_text(body)
    with pytest.raises(DataError, match=message.replace("{", r"\{").replace("}", r"\}")):
        load_csv(f)


def test_simulate_round_trip(tmp_path):
    from dynprobit.cli import build_model
    from dynprobit.config import load_config

    cfg_path = write_config(tmp_path)
    assert main(["simulate", str(cfg_path)]) == EXIT_OK
    y, X = load_csv(tmp_path / "out" / "data.csv")
    model, states = build_model(load_config(cfg_path))
    np.testing.assert_array_equal(y, model.y)
    np.testing.assert_array_equal(X, model.X)
    assert (tmp_path / "out" / "states.csv").exists()


def test_fit_variants_agree_and_outputs(tmp_path):
    cfg_path = write_config(tmp_path)
    assert main(["fit", str(cfg_path), "--variant", "dense", "--out", "dense"]) == EXIT_OK
    assert main(["fit", str(cfg_path), "--variant", "lowrank", "--out", "low",
                 "--covariance"]) == EXIT_OK
    a = read_moments(tmp_path / "dense" / "moments.csv")
    b = read_moments(tmp_path / "low" / "moments.csv")
    assert a.dtype.names == ("t", "j", "mean", "var")
    assert np.abs(a["mean"] - b["mean"]).max() < 1e-8
    meta = json.loads((tmp_path / "low" / "meta.json").read_text())
    assert meta["converged"] and meta["variant"] == "lowrank"
    assert {"sweeps", "skips", "wall_time"} <= set(meta)
    cov = np.load(tmp_path / "low" / "covariance.npy")
    np.testing.assert_allclose(np.diag(cov), b["var"], rtol=1e-12)
    assert not (tmp_path / "dense" / "covariance.npy").exists()


def test_fit_zero_sweeps_gives_prior(tmp_path):
    cfg_path = write_config(tmp_path)
    assert main(["fit", str(cfg_path), "--max-sweeps", "0"]) == EXIT_NOT_CONVERGED
    m = read_moments(tmp_path / "out" / "moments.csv")
    np.testing.assert_array_equal(m["mean"], 0.0)
    meta = json.loads((tmp_path / "out" / "meta.json").read_text())
    assert meta["converged"] is False and meta["sweeps"] == 0
    # random walk prior: var(theta_t) = 3 + 0.01 t
    np.testing.assert_allclose(m["var"], 3 + 0.01 * m["t"], rtol=1e-12)


def test_fit_random_walk(tmp_path):
    cfg_path = write_config(tmp_path, model={"n": 241, "p": 2, "G": [[1, 0], [0, 1]],
                                             "W": [[0.01, 0], [0, 0.01]], "P0": [[3, 0], [0, 3]]})
    assert main(["fit", str(cfg_path)]) == EXIT_OK
    assert json.loads((tmp_path / "out" / "meta.json").read_text())["converged"]


def test_compare_with_quadrature(tmp_path):
    cfg_path = write_config(tmp_path, model={"n": 2, "p": 1, "G": 1, "W": 1.0, "P0": 1.0},
                            oracle={"method": "quadrature"}, compare={"gate": 0.02})
    assert main(["compare", str(cfg_path)]) == EXIT_OK
    report = json.loads((tmp_path / "out" / "comparison.json").read_text())
    assert report["within_gate"] and max(report["median_abs_mean_diff"]) < 0.02
    assert (tmp_path / "out" / "comparison.csv").exists()


def test_sample_from_csv(tmp_path):
    (tmp_path / "d.csv").write_text("y,x1\n1,1\n0,1\n1,1\n")
    cfg_path = write_config(tmp_path, model={"G": 1, "W": 1.0, "P0": 1.0},
                            data={"csv": "d.csv"},
                            oracle={"method": "rejection", "draws": 2000, "seed": 1})
    assert main(["sample", str(cfg_path)]) == EXIT_OK
    m = np.genfromtxt(tmp_path / "out" / "sample_moments.csv", delimiter=",", names=True)
    assert len(m) == 3 and np.all(m["se_mean"] > 0)


def test_bench_writes_timing(tmp_path):
    cfg_path = write_config(tmp_path, bench={"grid": [[10, 1], [20, 1]], "repeats": 1})
    assert main(["bench", str(cfg_path)]) == EXIT_OK
    timing = json.loads((tmp_path / "out" / "timing.json").read_text())
    assert len(timing["cells"]) == 2
    assert (tmp_path / "out" / "timing.csv").exists()


@pytest.mark.parametrize("sections, message", [
    ({"data": {"csv": "missing.csv"}}, "not found"),
    ({"data": {}}, "exactly one"),
    ({"model": {"n": 5, "p": 2, "W": [[1, 0, 0]]}}, "model.W"),
    ({"ep": {"tol": -1}}, "tol"),
    ({"bogus": {}}, "unknown section"),
])
def test_errors_are_machine_readable(tmp_path, capsys, sections, message):
    cfg_path = write_config(tmp_path, **sections)
    assert main(["fit", str(cfg_path)]) == EXIT_ERROR
    err = json.loads(capsys.readouterr().err)
    assert message in err["message"] and err["command"] == "fit"


def test_dimension_mismatch(tmp_path, capsys):
    (tmp_path / "d.csv").write_text("y,x1\n1,1\n0,1\n")
    cfg_path = write_config(tmp_path, model={"n": 5, "p": 1}, data={"csv": "d.csv"})
    assert main(["fit", str(cfg_path)]) == EXIT_ERROR
    assert "dimension mismatch" in json.loads(capsys.readouterr().err)["message"]
