import io
import json
import math

import numpy as np
import pytest

from bridgevar import estimators as est
from bridgevar import path_engine as pe
from bridgevar.cli import EXIT, main, parse_grid


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def error_line(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1, err
    return lines[0]


# -- simulate -----------------------------------------------------------------


def test_simulate_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert run(capsys, "simulate", "--paths", 2, "--steps", 100, "--gamma", 0,
                   "--seed", 7, "-o", p)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert "# seed=7\n" in text and "# steps=100\n" in text
    recs = pe.read_records_csv(str(a))
    assert len(recs) == 2


def test_simulate_records_match_library(tmp_path, capsys):
    out = tmp_path / "r.csv"
    run(capsys, "simulate", "--paths", 3, "--steps", 400, "--intervals", 4, "--gamma", 0.5,
        "--seed", 11, "--extra", "-o", out)
    recs = pe.read_records_csv(str(out))
    spec = pe.PathSpec(0.5, 400, pe.derive_seed(11, 2))
    expect = pe.interval_records(pe.simulate_canonical_path(spec), 4)
    assert recs[8:] == expect


def test_simulate_draws_and_reports_a_seed(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code, _, err = run(capsys, "simulate", "--steps", 10, "-o", out)
    assert code == 0
    seed = int(err.strip().split("=")[1])
    assert f"# seed={seed}\n" in out.read_text()


def test_simulate_drift_shows_in_closes(tmp_path, capsys):
    out = tmp_path / "r.csv"
    run(capsys, "simulate", "--paths", 4000, "--steps", 50, "--gamma", 1.0, "--seed", 3, "-o", out)
    close = np.array([r.close for r in pe.read_records_csv(str(out))])
    assert abs(close.mean() - 1.0) < 3 * close.std() / math.sqrt(close.size)


@pytest.mark.parametrize("argv", [["--steps", 0], ["--steps", "x"], ["--paths", 0],
                                  ["--eta", 1.5], ["--steps", 10, "--intervals", 3]])
def test_simulate_validation(argv, capsys):
    code, out, err = run(capsys, "simulate", "--seed", 1, *argv)
    assert code == EXIT["config"]
    assert error_line(err).startswith("error[config]: ")
    assert out == ""


def test_unwritable_output(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "--steps", 10, "--seed", 1,
                       "-o", tmp_path / "missing" / "r.csv")
    assert code == EXIT["io"] and error_line(err).startswith("error[io]: ")


# -- estimate -----------------------------------------------------------------


def _write_ticks(path, times, prices):
    with open(path, "w") as fh:
        fh.write("time,price\n")
        for t, p in zip(times, prices):
            fh.write(f"{float(t)!r},{float(p)!r}\n")


def test_constant_prices_estimate_zero(tmp_path, capsys, table_path):
    ticks = tmp_path / "t.csv"
    _write_ticks(ticks, np.arange(101.0), np.full(101, 50.0))
    code, out, _ = run(capsys, "estimate", ticks, "--intervals", 10, "--table", table_path,
                       "--estimators", "real,high,bpark,me,t-me-x")
    assert code == 0
    doc = json.loads(out)
    assert [e["value"] for e in doc["estimates"]] == [0.0] * 5
    assert doc["config"]["input_kind"] == "ticks"


def test_estimate_records_agrees_with_library(tmp_path, capsys, table_path):
    rec_file = tmp_path / "r.csv"
    run(capsys, "simulate", "--paths", 1, "--steps", 1000, "--intervals", 10, "--seed", 2,
        "--extra", "-o", rec_file)
    code, out, _ = run(capsys, "estimate", rec_file, "--estimators", "real,gk,t-me-x",
                       "--delta", 0.1, "--table", table_path)
    assert code == 0
    doc = json.loads(out)
    recs = pe.read_records_csv(str(rec_file))
    w = est.WeightSource("table", table_path)
    for e in doc["estimates"]:
        ref = est.integrated_variance(recs, e["estimator"], 0.1, w)
        assert e["value"] == ref.value and e["per_interval"] == ref.per_interval
        assert e["rate"] == pytest.approx(ref.value)


def test_estimate_csv_output(tmp_path, capsys):
    rec_file, out = tmp_path / "r.csv", tmp_path / "e.csv"
    run(capsys, "simulate", "--steps", 100, "--intervals", 5, "--seed", 2, "-o", rec_file)
    assert run(capsys, "estimate", rec_file, "--estimators", "real,bpark", "-o", out)[0] == 0
    rows = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
    assert rows[0] == "interval,real,bpark" and rows[-1].startswith("total,")
    assert len(rows) == 7
    vals = np.array([[float(x) for x in r.split(",")[1:]] for r in rows[1:-1]])
    total = [float(x) for x in rows[-1].split(",")[1:]]
    np.testing.assert_allclose(vals.sum(axis=0), total, rtol=1e-14)


def test_estimate_missing_table_is_actionable(tmp_path, capsys):
    rec_file = tmp_path / "r.csv"
    run(capsys, "simulate", "--steps", 100, "--seed", 2, "-o", rec_file)
    code, _, err = run(capsys, "estimate", rec_file, "--estimators", "t-me-x",
                       "--table", tmp_path / "none.bvat")
    assert code == EXIT["table"]
    assert "alpha-table build" in error_line(err)


def test_estimate_missing_field(tmp_path, capsys):
    rec_file = tmp_path / "r.csv"
    run(capsys, "simulate", "--steps", 100, "--seed", 2, "-o", rec_file)
    code, _, err = run(capsys, "estimate", rec_file, "--estimators", "park")
    assert code == EXIT["missing-field"]
    assert "raw_high" in error_line(err)


def test_estimate_input_errors(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert run(capsys, "estimate", bad)[0] == EXIT["data"]
    ticks = tmp_path / "t.csv"
    _write_ticks(ticks, [0.0, 1.0, 2.0], [1.0, -1.0, 1.0])
    code, _, err = run(capsys, "estimate", ticks, "--intervals", 1)
    assert code == EXIT["data"] and "index 1" in err
    assert run(capsys, "estimate", ticks)[0] == EXIT["config"]
    assert run(capsys, "estimate", tmp_path / "nope.csv")[0] == EXIT["io"]
    rec_file = tmp_path / "r.csv"
    run(capsys, "simulate", "--steps", 100, "--seed", 2, "--extra", "-o", rec_file)
    assert run(capsys, "estimate", rec_file, "--estimators", "gk",
               "--gk-reading", "drift-free")[0] == EXIT["config"]


def test_known_sigma_ticks(tmp_path, capsys, table_path):
    # geometric Brownian ticks with sigma^2 = 0.04 per unit time over T = 5
    sigma2, T, reps, ticks = 0.04, 5.0, 30, 60000
    real, best = [], []
    rng = np.random.default_rng(99)
    times = np.linspace(0.0, T, ticks + 1)
    for k in range(reps):
        dx = rng.standard_normal(ticks) * math.sqrt(sigma2 * T / ticks)
        prices = 100 * np.exp(np.concatenate([[0.0], np.cumsum(dx)]) + 0.01 * times)
        f = tmp_path / f"t{k}.csv"
        _write_ticks(f, times, prices)
        code, out, _ = run(capsys, "estimate", f, "--intervals", 30, "--estimators",
                           "real,t-me-x", "--table", table_path)
        assert code == 0
        r, b = json.loads(out)["estimates"]
        real.append(r["rate"])
        best.append(b["rate"])
    real, best = np.array(real), np.array(best)
    assert abs(real.mean() - sigma2) < 3 * real.std(ddof=1) / math.sqrt(reps)
    # 2000 ticks per interval: the discrete extremes bias t-me-x low by ~4%
    assert abs(best.mean() - sigma2) < 3 * best.std(ddof=1) / math.sqrt(reps) + 0.06 * sigma2
    # t-me-x uses three values per interval against one for realized variance,
    # so at equal interval count its spread is smaller by sqrt(3) R ~ 3.4
    ratio = real.std(ddof=1) / best.std(ddof=1)
    assert ratio > 2.0


# -- efficiency ---------------------------------------------------------------


def test_gamma_grid_parsing():
    g = parse_grid("0:0.1:1.6")
    assert len(g) == 17 and g[0] == 0.0 and g[-1] == 1.6 and g[3] == 0.3
    assert parse_grid("0, 0.5,1") == [0.0, 0.5, 1.0]


def test_efficiency_csv(tmp_path, capsys, table_path):
    out = tmp_path / "eff.csv"
    code, _, _ = run(capsys, "efficiency", "--estimators", "real,bpark,t-me-x", "--gamma-grid",
                     "0:0.5:1", "--paths", 200, "--steps", 300, "--seed", 5, "--table",
                     table_path, "-o", out)
    assert code == 0
    text = out.read_text()
    assert "# seed=5\n" in text and "# gammas=0.0,0.5,1.0\n" in text
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert body[0] == "estimator,gamma,samples,mean,mean_se,variance,variance_se,R"
    assert len(body) == 10
    assert sum(ln.startswith("# fit ") for ln in text.splitlines()) == 3
    again = tmp_path / "eff2.csv"
    run(capsys, "efficiency", "--estimators", "real,bpark,t-me-x", "--gamma-grid", "0:0.5:1",
        "--paths", 200, "--steps", 300, "--seed", 5, "--table", table_path, "-o", again)
    assert again.read_text().replace("eff2", "eff") == text


def test_efficiency_json(tmp_path, capsys):
    out = tmp_path / "eff.json"
    assert run(capsys, "efficiency", "--estimators", "real", "--paths", 100, "--steps", 50,
               "--seed", 1, "-o", out)[0] == 0
    doc = json.loads(out.read_text())
    (rep,) = doc["reports"]
    assert rep["estimator"] == "real" and rep["samples"] == 100 and rep["kappa"] == 1
    assert doc["config"]["seed"] == 1


@pytest.mark.parametrize("argv", [["--estimators", ""], ["--estimators", "foo"],
                                  ["--paths", 10], ["--gamma-grid", "1:0:2"]])
def test_efficiency_validation(argv, capsys):
    code, _, err = run(capsys, "efficiency", "--seed", 1, "--steps", 10, *argv)
    assert code == EXIT["config"] and error_line(err).startswith("error[config]")


# -- alpha-table --------------------------------------------------------------


def test_table_build_and_verify(tmp_path, capsys):
    path = tmp_path / "small.bvat"
    csv = tmp_path / "small.csv"
    code, out, _ = run(capsys, "alpha-table", "build", "-o", path, "--n-theta", 6,
                       "--n-upsilon", 6, "--n-t", 8, "--no-efficiency", "--quiet", "--csv", csv)
    assert code == 0 and "checksum=" in out
    assert len(csv.read_text().splitlines()) == 2 + 6 * 6 * 8
    code, out, _ = run(capsys, "alpha-table", "verify", "--table", path, "--nodes", 20,
                       "--points", 20)
    assert code == 0 and out.strip().endswith("ok")


def test_table_verify_reports_corruption(tmp_path, capsys, tiny_table):
    path = tmp_path / "t.bvat"
    tiny_table.save(str(path))
    data = bytearray(path.read_bytes())
    data[200] ^= 0x40
    path.write_bytes(bytes(data))
    code, _, err = run(capsys, "alpha-table", "verify", "--table", path)
    assert code == EXIT["table"]
    assert "offset 0" in error_line(err)
    path.write_bytes(bytes(data[:1000]))
    code, _, err = run(capsys, "alpha-table", "verify", "--table", path)
    assert code == EXIT["table"] and "offset" in error_line(err)


def test_table_from_environment(monkeypatch, tmp_path, capsys, tiny_table):
    tiny_table.save(str(tmp_path / "alpha_table.bvat"))
    monkeypatch.setenv("BRIDGEVAR_TABLE_DIR", str(tmp_path))
    code, out, _ = run(capsys, "alpha-table", "verify", "--nodes", 5, "--points", 5)
    assert code == 0 and str(tmp_path) in out
