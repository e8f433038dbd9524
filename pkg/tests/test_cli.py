import json

import numpy as np
import pytest

from opasqueeze.cli import main, parse_range
from opasqueeze.estimation import PumpSweep


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_range():
    np.testing.assert_allclose(parse_range("0.05:0.33:0.02"), np.round(np.arange(0.05, 0.3301, 0.02), 12))
    assert parse_range("0.05:0.33:0.02")[-1] == 0.33
    np.testing.assert_allclose(parse_range("0.1,0.2"), [0.1, 0.2])


def test_simulate_sweep(tmp_cwd, capsys):
    code, _, _ = run(["simulate", "sweep", "--a-pct-per-w", "1034", "--loss", "0.386",
                      "--powers", "0.05:0.33:0.02", "-o", "s.csv"], capsys)
    assert code == 0
    sweep = PumpSweep.load("s.csv")
    last = sweep.points[-1]
    assert last[0] == 0.33
    assert round(last[1], 2) == -3.97 and round(last[2], 2) == 13.99


def test_simulate_sweep_mw_and_zero_power(tmp_cwd, capsys):
    assert run(["simulate", "sweep", "--a-pct-per-w", "1034", "--loss", "0.386",
                "--powers-mw", "0", "-o", "z.csv"], capsys)[0] == 0
    sweep = PumpSweep.load("z.csv")
    assert np.all(np.abs(sweep.squeezed_db) < 1e-12) and np.all(np.abs(sweep.antisqueezed_db) < 1e-12)


def test_simulate_sweep_default_output_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("OPASQUEEZE_OUTPUT_DIR", str(tmp_path / "out"))
    assert run(["simulate", "sweep", "--a-pct-per-w", "500", "--loss", "0.2", "--powers", "0.1,0.2"], capsys)[0] == 0
    assert (tmp_path / "out" / "sweep.csv").exists()


def test_simulate_invalid(tmp_cwd, capsys):
    code, _, err = run(["simulate", "sweep", "--a-pct-per-w", "1034", "--loss", "1.5",
                        "--powers", "0.1", "-o", "s.csv"], capsys)
    assert code == 1 and "loss" in err


def test_simulate_trace_deterministic(tmp_cwd, capsys):
    for name in ("a.csv", "b.csv"):
        assert run(["simulate", "trace", "--r-plus-db", "14.0", "--r-minus-db", "-4.0",
                    "--seed", "7", "-o", name], capsys)[0] == 0
    assert (tmp_cwd / "a.csv").read_bytes() == (tmp_cwd / "b.csv").read_bytes()
    assert (tmp_cwd / "a.json").read_bytes() == (tmp_cwd / "b.json").read_bytes()


def test_simulate_trace_needs_levels(tmp_cwd, capsys):
    assert run(["simulate", "trace", "--r-plus-db", "14.0"], capsys)[0] == 1


def test_fit_sweep_roundtrip(tmp_cwd, capsys):
    run(["simulate", "sweep", "--a-pct-per-w", "1034", "--loss", "0.386", "--powers", "0.05:0.33:0.02",
         "-o", "s.csv"], capsys)
    code, out, _ = run(["fit", "sweep", "s.csv"], capsys)
    assert code == 0
    res = json.loads(out)
    assert {"params", "stderr", "residual_ss", "converged", "iterations"} <= set(res)
    assert res["params"]["L"] == pytest.approx(0.386, abs=1e-6)
    assert res["a_pct_per_w"] == pytest.approx(1034, abs=1e-2)
    # simulate again from the fitted parameters
    run(["simulate", "sweep", "--a-pct-per-w", repr(res["a_pct_per_w"]), "--loss", repr(res["params"]["L"]),
         "--powers", "0.05:0.33:0.02", "-o", "s2.csv"], capsys)
    a, b = PumpSweep.load("s.csv"), PumpSweep.load("s2.csv")
    np.testing.assert_allclose(a.squeezed_db, b.squeezed_db, atol=1e-6)
    np.testing.assert_allclose(a.antisqueezed_db, b.antisqueezed_db, atol=1e-6)


def test_fit_sweep_oracle(tmp_cwd, capsys):
    run(["simulate", "sweep", "--a-pct-per-w", "1034", "--loss", "0.386", "--powers", "0.05:0.33:0.02",
         "-o", "s.csv"], capsys)
    code, out, _ = run(["fit", "sweep", "s.csv", "--oracle", "--a-max-pct-per-w", "2000"], capsys)
    assert code == 0
    assert json.loads(out)["oracle"]["agrees"] is True


def test_fit_sweep_oracle_disagreement_fails(tmp_cwd, capsys):
    run(["simulate", "sweep", "--a-pct-per-w", "1034", "--loss", "0.386", "--powers", "0.05:0.33:0.02",
         "-o", "s.csv"], capsys)
    # a grid that cannot reach the true a
    code, _, err = run(["fit", "sweep", "s.csv", "--oracle", "--a-max-pct-per-w", "500"], capsys)
    assert code == 2 and "disagrees" in err


def test_fit_empty_and_malformed(tmp_cwd, capsys):
    (tmp_cwd / "empty.csv").write_text("")
    code, _, err = run(["fit", "sweep", "empty.csv"], capsys)
    assert code == 1 and "parse error" in err
    (tmp_cwd / "bad.csv").write_text("power_w,squeezed_db,antisqueezed_db\n0.1,1,2\n0.2,x,3\n")
    code, _, err = run(["fit", "sweep", "bad.csv"], capsys)
    assert code == 1 and "line 3" in err
    code, _, err = run(["fit", "sweep", "missing.csv"], capsys)
    assert code == 1


def test_fit_non_identifiable(tmp_cwd, capsys):
    (tmp_cwd / "z.csv").write_text("power_w,squeezed_db,antisqueezed_db\n0,0,0\n")
    code, _, err = run(["fit", "sweep", "z.csv"], capsys)
    assert code == 1 and "non-identifiable" in err


def test_fit_strict_nonconvergence(tmp_cwd, capsys, monkeypatch):
    import opasqueeze.cli as cli
    from opasqueeze import estimation

    run(["simulate", "sweep", "--a-pct-per-w", "300", "--loss", "0.7", "--powers", "0.05:0.33:0.02",
         "-o", "s.csv"], capsys)
    monkeypatch.setattr(cli, "fit_pump_sweep", lambda s, fixed_loss=None: estimation.fit_pump_sweep(s, max_iter=1))
    code, out, _ = run(["fit", "sweep", "s.csv"], capsys)
    assert code == 0 and json.loads(out)["converged"] is False
    code, _, err = run(["fit", "sweep", "s.csv", "--strict"], capsys)
    assert code == 2


def test_fit_batch(tmp_cwd, capsys):
    for i, loss in enumerate(("0.2", "0.5", "0.7")):
        run(["simulate", "sweep", "--a-pct-per-w", "900", "--loss", loss, "--powers", "0.05:0.33:0.04",
             "-o", f"s{i}.csv"], capsys)
    code, _, _ = run(["fit", "sweep", "s0.csv", "s1.csv", "s2.csv", "--jobs", "3", "-o", "fits"], capsys)
    assert code == 0
    got = [json.loads((tmp_cwd / "fits" / f"s{i}.fit.json").read_text())["params"]["L"] for i in range(3)]
    np.testing.assert_allclose(got, [0.2, 0.5, 0.7], atol=1e-6)


def test_fit_trace(tmp_cwd, capsys):
    run(["simulate", "trace", "--a-pct-per-w", "1034", "--loss", "0.386", "--pump-mw", "330",
         "--jitter-db", "0", "--phase-offset", "0.5", "-o", "t.csv"], capsys)
    code, out, _ = run(["fit", "trace", "t.csv"], capsys)
    res = json.loads(out)
    assert code == 0
    assert res["R_minus_db"] == pytest.approx(-3.9656865242706884, abs=1e-9)
    assert res["params"]["phase_offset"] == pytest.approx(0.5, abs=1e-9)


def test_budget_published_items(capsys):
    code, out, _ = run(["budget", "--module-t", "0.56", "--coupler", "0.45/0.50",
                        "--responsivity", "1.16@1553.3", "--electronic", "0.02"], capsys)
    res = json.loads(out)
    assert code == 0
    assert [e["name"] for e in res["elements"]] == ["module", "coupler", "detector", "electronics"]
    assert 0.385 <= res["total"] <= 0.390
    assert res["total_4dp"] == 0.3889


def test_budget_trivial(capsys, tmp_path):
    assert json.loads(run(["budget"], capsys)[1])["total"] == 0.0
    assert json.loads(run(["budget", "--element", "x=0.25"], capsys)[1])["total"] == 0.25
    saved = tmp_path / "b.json"
    run(["budget", "--element", "x=0.25", "--electronic-db", "16.99", "--save", str(saved)], capsys)
    code, out, _ = run(["budget", "--from", str(saved)], capsys)
    assert code == 0 and len(json.loads(out)["elements"]) == 2


def test_budget_invalid_element(capsys):
    code, _, err = run(["budget", "--coupler", "0.55/0.50"], capsys)
    assert code == 1 and "coupler" in err
    code, _, err = run(["budget", "--responsivity", "1.16"], capsys)
    assert code == 1 and "responsivity" in err


def test_report_default(capsys):
    code, out, _ = run(["report"], capsys)
    assert code == 0
    rows = [l for l in out.splitlines() if l.endswith("PASS") and not l.startswith("ALL")]
    assert len(rows) == 11 and out.rstrip().endswith("ALL PASS")


def test_report_json_matches_table(capsys):
    _, table, _ = run(["report"], capsys)
    code, out, _ = run(["report", "--format", "json"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["schema_version"] == 1 and rep["all_pass"]
    for row in rep["rows"]:
        assert f"{row['computed']:.4f}" in table


def test_report_loss_override_fails(capsys):
    code, out, _ = run(["report", "--loss", "0.9"], capsys)
    assert code == 1
    line = next(l for l in out.splitlines() if l.startswith("measured squeezing"))
    assert line.endswith("FAIL")


def test_report_deterministic(capsys):
    assert run(["report", "--format", "json"], capsys)[1] == run(["report", "--format", "json"], capsys)[1]


def test_module_entry_point():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-m", "opasqueeze", "budget", "--element", "x=0.1"],
                         capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["total"] == pytest.approx(0.1, abs=1e-15)
