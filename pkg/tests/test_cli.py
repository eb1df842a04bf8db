import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from varint import Trajectory
from varint.cli import main, read_trajectory, state_columns, write_trajectory

from oracles import printed_gamma3


def write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- run -------------------------------------------------------------------------------


def test_run_free_particle(tmp_path, capsys):
    path = write_config(tmp_path, {"problem": "free_particle", "N": 8, "output_dir": "out",
                                   "guess_noise": 0.3, "seed": 4})
    assert main(["run", str(path), "--quiet"]) == 0
    out = tmp_path / "out"
    r = rows(out / "trajectory.csv")
    assert r[0] == ["k", "t", "q0"]
    q = np.array([float(x[2]) for x in r[1:]])
    np.testing.assert_allclose(q, np.linspace(0, 1, 9), atol=1e-11)
    assert [int(x[0]) for x in r[1:]] == list(range(9))
    res = rows(out / "residuals.csv")
    assert res[0] == ["iteration", "residual"] and float(res[-1][1]) < 1e-12
    report = json.loads((out / "report.json").read_text())
    assert report["solve"]["converged"] is True
    assert report["convergence_report"]["guarantee"] == "TheoremSatisfied"
    assert "converged" in capsys.readouterr().out


def test_run_not_converged_exit_2(tmp_path):
    path = write_config(tmp_path, {"problem": "free_particle", "N": 30, "guess_noise": 1.0,
                                   "solver": {"max_iters": 3}})
    assert main(["run", str(path), "--quiet"]) == 2
    assert (tmp_path / "trajectory.csv").exists()


def test_damping_out_of_range(tmp_path, capsys):
    path = write_config(tmp_path, {"problem": "fuel", "solver": {"damping": 1.5}})
    assert main(["run", str(path)]) == 1
    err = capsys.readouterr().err
    assert "damping" in err and "0 <= damping < 1" in err
    assert not (tmp_path / "trajectory.csv").exists()


def test_unknown_keys_rejected(tmp_path, capsys):
    path = write_config(tmp_path, {"problem": "fuel", "solver": {"tolerance": 1e-3}})
    assert main(["run", str(path)]) == 1
    assert "tolerance" in capsys.readouterr().err
    path = write_config(tmp_path, {"problem": "fuel", "colour": "red"})
    assert main(["run", str(path)]) == 1
    assert "colour" in capsys.readouterr().err
    path = write_config(tmp_path, {"problem": "fuel", "params": {"mass": 2}})
    assert main(["run", str(path)]) == 1
    assert "mass" in capsys.readouterr().err


def test_malformed_json_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "problem": "fuel",\n  "N": 20,,\n}\n')
    assert main(["run", str(path)]) == 1
    err = capsys.readouterr().err
    assert "line 3" in err and "column" in err


@pytest.mark.parametrize("cfg,field", [({"problem": "nope"}, "problem"), ({"problem": "fuel", "N": 1}, "N"),
                                       ({"problem": "fuel", "N": 2.5}, "N"), ({"problem": "fuel", "T": -1}, "T"),
                                       ({"problem": "fuel", "solver": {"tol_residual": 0}}, "tol_residual"),
                                       ({"problem": "fuel", "scheme": "euler"}, "scheme"),
                                       ({}, "problem")])
def test_field_validation(tmp_path, capsys, cfg, field):
    assert main(["run", str(write_config(tmp_path, cfg))]) == 1
    assert field in capsys.readouterr().err


def test_missing_config(tmp_path, capsys):
    assert main(["run", str(tmp_path / "absent.json")]) == 1
    assert "cannot read" in capsys.readouterr().err


# -- diag -----------------------------------------------------------------------------------


def test_diag_quadratic(tmp_path):
    path = write_config(tmp_path, {"problem": "quadratic", "N": 6})
    assert main(["run", str(path), "--quiet"]) == 0
    assert main(["diag", str(path)]) == 0
    rep = json.loads((tmp_path / "convergence_report.json").read_text())
    assert rep["guarantee"] == "TheoremSatisfied"
    assert all(rep["per_step_psd"]) and rep["all_A_pd"] and rep["all_B_pd"] and rep["global_pd"]
    assert rep["spectral_radius_estimate"] < 1


def test_diag_indefinite_toy(tmp_path):
    path = write_config(tmp_path, {"problem": "indefinite_toy"})
    write_trajectory(tmp_path / "trajectory.csv", Trajectory(np.linspace(1, 2, 5)[:, None], np.arange(5.0), 1, 1))
    assert main(["diag", str(path)]) == 0
    rep = json.loads((tmp_path / "convergence_report.json").read_text())
    assert rep["guarantee"] == "NoGuarantee"
    assert not any(rep["per_step_psd"])


def test_diag_shape_mismatch(tmp_path, capsys):
    path = write_config(tmp_path, {"problem": "quadratic", "N": 6})
    write_trajectory(tmp_path / "trajectory.csv", Trajectory(np.zeros((5, 1)), np.arange(5.0), 1, 1))
    assert main(["diag", str(path)]) == 1
    assert "N=4" in capsys.readouterr().err
    write_trajectory(tmp_path / "trajectory.csv", Trajectory(np.zeros((7, 2)), np.arange(7.0), 1, 2))
    assert main(["diag", str(path)]) == 1
    assert "columns" in capsys.readouterr().err


def test_diag_without_trajectory(tmp_path, capsys):
    path = write_config(tmp_path, {"problem": "quadratic"})
    assert main(["diag", str(path)]) == 1
    assert "run the solver first" in capsys.readouterr().err


# -- matrices ----------------------------------------------------------------------------------


def matrices_json(capsys, gamma, h):
    assert main(["matrices", "--gamma", str(gamma), "--h", str(h)]) == 0
    return json.loads(capsys.readouterr().out)


def test_matrices_gamma3(capsys):
    out = matrices_json(capsys, 3, 0.5)
    ref = printed_gamma3(0.5)
    for name in "ABCDELU":
        np.testing.assert_allclose(np.array(out[name]), ref[name], rtol=1e-14)
    assert out["det_C"] == pytest.approx(np.linalg.det(ref["C"]), rel=1e-10)
    assert all(v["passed"] for v in out["identities"].values())


def test_matrices_gamma1(capsys):
    out = matrices_json(capsys, 1, 2.0)
    assert [out[n] for n in "ABCDE"] == [[[1.0]], [[2.0]], [[2.0]], [[1.0]], [[1.0]]]


def test_matrices_gamma6_identities(capsys):
    out = matrices_json(capsys, 6, 0.7)
    assert len(out["identities"]) == 4
    assert all(v["passed"] for v in out["identities"].values())


def test_matrices_bad_gamma(capsys):
    assert main(["matrices", "--gamma", "0", "--h", "1"]) == 1
    assert "error" in capsys.readouterr().err


# -- files -------------------------------------------------------------------------------------


def test_state_columns_order():
    assert state_columns(1, 2) == ["q0", "q1"]
    assert state_columns(2, 2) == ["q0", "q1", "q0_d1", "q1_d1"]


def test_csv_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(9)
    nodes = rng.normal(size=(11, 4)) * 10.0 ** rng.integers(-12, 12, size=(11, 4))
    nodes[3, 1] = -0.0
    nodes[4, 2] = np.nextafter(1.0, 2.0)
    t = Trajectory(nodes, np.cumsum(rng.uniform(0.1, 1, 11)), 2, 2)
    write_trajectory(tmp_path / "t.csv", t)
    back = read_trajectory(tmp_path / "t.csv", 2, 2)
    assert np.array_equal(back.nodes, t.nodes) and np.array_equal(back.times, t.times)
    assert np.signbit(back.nodes[3, 1])


def test_entry_point_subprocess(tmp_path):
    path = write_config(tmp_path, {"problem": "free_particle", "N": 4})
    proc = subprocess.run([sys.executable, "-m", "varint", "run", str(path), "--quiet"],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "trajectory.csv").exists()
