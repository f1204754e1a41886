import csv
import io
import json
import math

import numpy as np
import pytest

from quasidg.cli import CSV_FIELDS, main

HEADER = ("level,h,elements,dofs,err_l2,err_energy,err_theta,err_sigma,"
          "rate_l2,rate_energy,newton_iters,converged")


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_header_constant():
    assert ",".join(CSV_FIELDS) == HEADER


def test_solve_poisson(capsys):
    code, out, _ = _run(capsys, "solve", "--model", "poisson", "--scheme", "sipg",
                        "--degree", "1", "--n", "8")
    assert code == 0
    assert out.splitlines()[0] == HEADER
    (row,) = _rows(out)
    assert 0 < float(row["err_l2"]) < math.inf
    assert row["converged"] == "true" and row["newton_iters"] == "1"
    assert row["rate_l2"] == ""


def test_br2_degenerate_rejected(capsys):
    code, _, err = _run(capsys, "solve", "--model", "degenerate", "--scheme", "br2")
    assert code == 2
    assert "degenerate-diffusion" in err and "lam > 0" in err


def test_unknown_model_lists_registry(capsys):
    code, _, err = _run(capsys, "solve", "--model", "plasma")
    assert code == 2
    for name in ("meancurv", "poisson", "newtonian"):
        assert name in err


def test_bad_flag_values(capsys):
    assert _run(capsys, "solve", "--beta", "upwind")[0] == 2
    assert _run(capsys, "solve", "--penalty", "-3")[0] == 2
    assert _run(capsys, "converge", "--levels", "1")[0] == 2
    assert _run(capsys, "solve", "--degree", "0")[0] == 2


def test_non_convergence_exit_code(capsys):
    code, out, err = _run(capsys, "solve", "--model", "meancurv", "--n", "4", "--max-iter", "1")
    assert code == 3
    assert _rows(out)[0]["converged"] == "false"
    assert "no convergence" in err


def test_convergence_partial_csv(capsys):
    code, out, _ = _run(capsys, "converge", "--model", "meancurv", "--n", "2",
                        "--levels", "3", "--max-iter", "2")
    assert code == 3
    assert 1 <= len(_rows(out)) < 3


def test_convergence_rates_and_pairwise_column(capsys, tmp_path):
    path = tmp_path / "c.csv"
    code, _, err = _run(capsys, "converge", "--degree", "2", "--n", "2", "--levels", "3",
                        "--out", str(path))
    assert code == 0 and "fitted rates" in err
    rows = _rows(path.read_text())
    assert [int(r["elements"]) for r in rows] == [8, 32, 128]
    assert rows[0]["rate_l2"] == ""
    for k in (1, 2):
        expect = np.log2(float(rows[k - 1]["err_energy"]) / float(rows[k]["err_energy"]))
        assert float(rows[k]["rate_energy"]) == pytest.approx(expect, rel=1e-9)


def test_csv_bit_stable(capsys):
    argv = ("converge", "--model", "meancurv", "--scheme", "br2", "--n", "2", "--levels", "2")
    a = _run(capsys, *argv)[1]
    b = _run(capsys, *argv)[1]
    assert a == b


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"model": "meancurv", "scheme": "br2", "degree": 2, "n": 2}))
    code, out, _ = _run(capsys, "solve", "--config", str(cfg))
    assert code == 0 and _rows(out)[0]["dofs"] == str(8 * 6)
    code, out, _ = _run(capsys, "solve", "--config", str(cfg), "--degree", "1")
    assert code == 0 and _rows(out)[0]["dofs"] == str(8 * 3)
    cfg.write_text(json.dumps({"colour": "red"}))
    code, _, err = _run(capsys, "solve", "--config", str(cfg))
    assert code == 2 and "colour" in err


def test_sweep(capsys):
    code, out, _ = _run(capsys, "sweep", "--n", "4", "--penalties", "1,2")
    assert code == 0
    assert out.splitlines()[0] == "penalty," + HEADER
    rows = _rows(out)
    assert float(rows[1]["penalty"]) == pytest.approx(2 * float(rows[0]["penalty"]))
    assert _run(capsys, "sweep", "--penalties", "1,x")[0] == 2


def test_probe_json(capsys, tmp_path):
    path = tmp_path / "p.json"
    code, _, _ = _run(capsys, "probe", "--model", "meancurv", "--scheme", "sipg", "--n", "4",
                      "--samples", "10", "--out", str(path))
    assert code == 0
    rep = json.loads(path.read_text())
    assert rep["model"] == "meancurv"
    assert rep["discrete"]["coercivity"]["min"] > 0
    assert rep["discrete"]["monotonicity"]["samples"] == 10
    assert rep["continuous"]["growth_ok"]


@pytest.mark.slow
def test_poisson_sipg_q1_rates(capsys):
    code, out, err = _run(capsys, "converge", "--degree", "1", "--n", "8", "--levels", "4")
    assert code == 0
    rates = dict(kv.split("=") for kv in err.split(":", 1)[1].split())
    assert float(rates["energy"]) == pytest.approx(1.0, abs=0.15)
    assert float(rates["l2"]) == pytest.approx(2.0, abs=0.15)
    assert float(rates["theta"]) == pytest.approx(float(rates["energy"]), abs=0.25)
