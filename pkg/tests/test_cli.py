"""Command line driver, scenario parsing and report format."""

import csv
import io
import json
import math
import subprocess
import sys

import pytest

from radialbounds.cli import Report, main, run_analyze, run_sweep, sweep_csv, validate_report
from radialbounds.errors import ParseError, UnknownParameter
from radialbounds.scenario import apply_parameter, load_scenario, parse_value, scenario_from_dict

HYP = {"profile": {"kind": "closed_form_sigma", "family": "hyperbolic", "params": {"k": 1.0}},
       "m": 2, "r_phi": "inf", "H": 0.0}
EUC = {"profile": {"kind": "closed_form_sigma", "family": "euclidean"}, "m": 2, "r_phi": 1.0, "H": 0.0}
WORKED = {"profile": {"kind": "closed_form_sigma", "family": "poly_exp",
                      "params": {"p": [0, 1, 0, 0, 0, 0, 0, 0.5], "q": [0, 0, 0, 0, 0, 0, 1 / 6]}},
          "m": 2, "r_phi": "inf", "H": 0.0, "declared_assumptions": {"proper": True}}


def write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def run(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


class TestAnalyze:
    def test_hyperbolic(self, tmp_path, capsys):
        code, out, _ = run(["analyze", write(tmp_path, "h.json", HYP), "--no-timings"], capsys)
        assert code == 0
        data = json.loads(out)
        validate_report(data)
        assert data["estimate"]["lambda_lower"] == pytest.approx(0.25, rel=1e-12)
        assert data["tool"]["name"] == "radialbounds"
        assert "timings" not in data

    def test_worked(self, tmp_path, capsys):
        code, out, _ = run(["analyze", write(tmp_path, "w.json", WORKED)], capsys)
        assert code == 0
        data = json.loads(out)
        assert data["estimate"]["lambda_lower"] == pytest.approx(2.6255, abs=5e-5)
        assert data["estimate"]["discrete_spectrum"] == "yes"
        assert data["timings"]["total_s"] > 0

    def test_malformed_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code, out, err = run(["analyze", bad], capsys)
        assert code == 1 and out == ""
        assert err.startswith("error [cli] ParseError")

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(["analyze", tmp_path / "nope.json"], capsys)
        assert code == 1 and "ParseError" in err

    def test_schema_violation(self, tmp_path, capsys):
        code, _, err = run(["analyze", write(tmp_path, "x.json", dict(HYP, extra=1))], capsys)
        assert code == 1 and "scenario invalid" in err

    def test_upstream_error_attributed(self, tmp_path, capsys):
        code, _, err = run(["analyze", write(tmp_path, "x.json", dict(EUC, m=3, l=2))], capsys)
        assert code == 1 and err.startswith("error [profile] DimensionMismatch")

    def test_hypotheses_violated_exit_2(self, tmp_path, capsys):
        sph = {"profile": {"kind": "closed_form_sigma", "family": "spherical"}, "m": 2, "r_phi": 3.0}
        code, out, _ = run(["analyze", write(tmp_path, "s.json", sph)], capsys)
        assert code == 2
        assert json.loads(out)["estimate"]["conditional"] is True

    def test_A_one_exit_2(self, tmp_path, capsys):
        code, out, _ = run(["analyze", write(tmp_path, "a.json", dict(HYP, H=1.0))], capsys)
        assert code == 2
        assert json.loads(out)["estimate"]["discrete_spectrum"] == "hypotheses-violated"

    def test_overrides(self, tmp_path, capsys):
        code, out, _ = run(["analyze", write(tmp_path, "h.json", HYP), "--tol", "1e-8",
                            "--r-cap", "20", "--no-timings"], capsys)
        assert code == 0
        echo = json.loads(out)["input"]["analysis"]
        assert echo["tol"] == 1e-8 and echo["r_cap"] == 20.0

    def test_out_file_and_csv(self, tmp_path, capsys):
        path = write(tmp_path, "e.json", EUC)
        out_json = tmp_path / "r.json"
        code, out, _ = run(["analyze", path, "--out", out_json, "--format", "both", "--no-timings"], capsys)
        assert code == 0 and out == ""
        validate_report(json.loads(out_json.read_text()))
        rows = dict(csv.reader(io.StringIO((tmp_path / "r.csv").read_text())))
        assert float(rows["mean_exit_time_upper"]) == pytest.approx(0.25)

    def test_dump_tables(self, tmp_path, capsys):
        path = write(tmp_path, "w.json", dict(WORKED, output={"dump_tables": True}))
        code, out, _ = run(["analyze", path, "--no-timings"], capsys)
        tables = json.loads(out)["tables"]
        head = open(tables["ratio_table"]).readline().strip()
        assert head == "r,sigma,sigma_prime_over_sigma,V_or_logV,V_is_log,I,script_I,inv_I_cum"
        assert open(tables["warping_function"]).readline().startswith("r,sigma,sigma_prime")

    def test_byte_identical_subprocess(self, tmp_path):
        path = write(tmp_path, "w.json", WORKED)
        cmd = [sys.executable, "-m", "radialbounds", "analyze", str(path), "--no-timings"]
        a = subprocess.run(cmd, capture_output=True, check=True).stdout
        b = subprocess.run(cmd, capture_output=True, check=True).stdout
        assert a == b and len(a) > 100

    def test_report_round_trip(self, tmp_path):
        rep, _ = run_analyze(write(tmp_path, "w.json", WORKED), timings=False)
        text = rep.dumps()
        back = Report.from_dict(json.loads(text))
        assert back.dumps() == text
        assert back.estimate_report().lambda_lower == rep.estimate["lambda_lower"]


class TestSweep:
    def lam(self, text, col="lambda_lower"):
        return [r[col] for r in csv.DictReader(io.StringIO(text))]

    def test_H0(self, tmp_path, capsys):
        code, out, _ = run(["sweep", write(tmp_path, "h.json", HYP), "--param", "H0",
                            "--values", "0,0.25,0.5,0.75,1.0", "--workers", "1"], capsys)
        got = [float(x) for x in self.lam(out)]
        expected = [(1 - h) ** 2 / 4 for h in (0, 0.25, 0.5, 0.75, 1.0)]
        assert got == pytest.approx(expected, abs=1e-12)
        assert [round(x, 4) for x in got] == [0.25, 0.1406, 0.0625, 0.0156, 0.0]
        assert code == 2  # the H0 = 1 row violates A < 1

    def test_m_parallel_order(self, tmp_path, capsys):
        code, out, _ = run(["sweep", write(tmp_path, "h.json", HYP), "--param", "m",
                            "--values", "2,3,4", "--workers", "2"], capsys)
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert [r["m"] for r in rows] == ["2", "3", "4"]
        assert [float(r["lambda_lower"]) for r in rows] == pytest.approx([0.25, 1.0, 2.25], rel=1e-12)

    def test_r_phi(self, tmp_path, capsys):
        code, out, _ = run(["sweep", write(tmp_path, "e.json", EUC), "--param", "r_phi",
                            "--values", "1,2,inf", "--workers", "1"], capsys)
        col = self.lam(out, "mean_exit_time_upper")
        assert float(col[0]) == pytest.approx(0.25) and float(col[1]) == pytest.approx(1.0)
        assert col[2] == "divergent"

    def test_serial_equals_parallel(self, tmp_path):
        path = write(tmp_path, "h.json", HYP)
        a, _ = run_sweep(path, "k", ["0.5", "1", "2"], workers=1)
        b, _ = run_sweep(path, "k", ["0.5", "1", "2"], workers=3)
        assert sweep_csv(a, "k") == sweep_csv(b, "k")

    def test_coefficient(self, tmp_path):
        rows, _ = run_sweep(write(tmp_path, "w.json", WORKED), "p[7]", ["0.5", "1.0"], workers=1)
        assert rows[0]["lambda_lower"] == pytest.approx(3 * 2 ** (2 / 3) * math.sqrt(3) / math.pi, rel=1e-8)
        assert rows[1]["lambda_lower"] != rows[0]["lambda_lower"]

    def test_unknown_parameter(self, tmp_path, capsys):
        code, _, err = run(["sweep", write(tmp_path, "h.json", HYP), "--param", "zeta",
                            "--values", "1"], capsys)
        assert code == 1 and "UnknownParameter" in err


class TestSimulate:
    MC = {"n_paths": 4000, "dt": 1e-4, "seed": 17, "R_list": [1.0]}

    def test_euclidean(self, tmp_path, capsys):
        path = write(tmp_path, "e.json", dict(EUC, mc=self.MC))
        code, out, _ = run(["simulate", path, "--no-timings"], capsys)
        data = json.loads(out)
        validate_report(data)
        (entry,) = data["mc"]
        assert entry["F_reference"] == pytest.approx(0.25)
        assert entry["pass"] and code == 0

    def test_hyperbolic(self, tmp_path, capsys):
        path = write(tmp_path, "h.json", dict(HYP, mc=self.MC))
        code, out, _ = run(["simulate", path, "--no-timings"], capsys)
        (entry,) = json.loads(out)["mc"]
        assert entry["F_reference"] == pytest.approx(0.2402, abs=5e-5)
        assert entry["pass"] and code == 0

    def test_worked_capped(self, tmp_path, capsys):
        mc = {"n_paths": 2000, "dt": 1e-4, "seed": 3, "R_list": [2.0, 4.0, 8.0], "adaptive": True}
        code, out, _ = run(["simulate", write(tmp_path, "w.json", dict(WORKED, mc=mc)), "--no-timings"], capsys)
        entries = json.loads(out)["mc"]
        assert code == 0
        for e in entries:
            assert e["mean_tau"] <= 0.3809 + 3 * e["stderr_tau"]
            assert e["below_F_inf_cap"]

    def test_seed_override_and_determinism(self, tmp_path, capsys):
        path = write(tmp_path, "e.json", dict(EUC, mc=self.MC))
        _, a, _ = run(["simulate", path, "--no-timings", "--seed", "5"], capsys)
        _, b, _ = run(["simulate", path, "--no-timings", "--seed", "5"], capsys)
        assert a == b
        assert json.loads(a)["mc"][0]["seed"] == 5

    def test_paths_csv(self, tmp_path, capsys):
        path = write(tmp_path, "e.json", dict(EUC, mc=self.MC))
        target = tmp_path / "paths.csv"
        run(["simulate", path, "--no-timings", "--paths-csv", target], capsys)
        assert (tmp_path / "paths.R0.csv").read_text().startswith("path_index,tau,censored")

    def test_no_mc_section(self, tmp_path, capsys):
        code, _, err = run(["simulate", write(tmp_path, "e.json", EUC)], capsys)
        assert code == 1 and "mc" in err

    def test_drift_blowup_attributed(self, tmp_path, capsys):
        mc = {"n_paths": 1000, "dt": 1e-4, "R_list": [8.0]}
        code, _, err = run(["simulate", write(tmp_path, "w.json", dict(WORKED, mc=mc))], capsys)
        assert code == 1 and err.startswith("error [montecarlo] DriftBlowup")


class TestScenario:
    def test_defaults_and_echo(self, tmp_path):
        sc = load_scenario(write(tmp_path, "h.json", HYP))
        assert sc.analysis["tol"] == 1e-10 and sc.analysis["r_cap"] == 50.0
        assert sc.assumptions["proper"] is False
        echo = sc.echo()
        assert echo["r_phi"] == "inf" and echo["output"]["format"] == "json"

    def test_table_file(self, tmp_path):
        (tmp_path / "g.csv").write_text("t,G\n0,1\n1,1\n2,1\n3,1\n")
        raw = {"profile": {"kind": "tabulated_G", "params": {"file": "g.csv"}}, "m": 2, "r_phi": 3.0}
        sc = load_scenario(write(tmp_path, "t.json", raw))
        assert sc.profile.eval_G(1.5) == 1.0

    def test_missing_table_file(self, tmp_path):
        raw = {"profile": {"kind": "tabulated_G", "params": {"file": "missing.csv"}}, "m": 2}
        with pytest.raises(ParseError):
            load_scenario(write(tmp_path, "t.json", raw))

    @pytest.mark.parametrize("bad", [
        {"m": 2},
        dict(HYP, m=1),
        dict(HYP, r_phi=-1),
        dict(HYP, r_phi="infinity"),
        dict(HYP, analysis={"tol": 1e-2}),
        dict(HYP, mc={"n_paths": 10}),
        dict(HYP, output={"format": "xml"}),
    ])
    def test_rejected(self, bad):
        with pytest.raises(ParseError):
            scenario_from_dict(bad)

    def test_parse_value(self):
        assert parse_value("inf") == "inf"
        assert parse_value("3") == 3 and parse_value("0.25") == 0.25
        with pytest.raises(ParseError):
            parse_value("abc")

    def test_apply_parameter(self):
        raw = apply_parameter(WORKED, "q[6]", 0.5)
        assert raw["profile"]["params"]["q"][6] == 0.5
        assert WORKED["profile"]["params"]["q"][6] == 1 / 6
        with pytest.raises(UnknownParameter):
            apply_parameter(EUC, "k", 1.0)
        with pytest.raises(UnknownParameter):
            apply_parameter(HYP, "coeffs[0]", 1.0)


def test_shipped_scenarios(scenarios_dir, capsys):
    expected = {"hyperbolic.json": 0, "euclidean.json": 0, "worked_example.json": 0,
                "hyperbolic_G.json": 0, "sphere.json": 2}
    for name, code in expected.items():
        got, out, _ = run(["analyze", scenarios_dir / name, "--no-timings"], capsys)
        assert got == code, name
        validate_report(json.loads(out))


def test_help_runs():
    res = subprocess.run([sys.executable, "-m", "radialbounds", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("analyze", "sweep", "simulate"):
        assert sub in res.stdout
