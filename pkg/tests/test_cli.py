import csv
import io
import subprocess
import sys

import pytest
from scipy.stats import spearmanr

from evlmodel.cli import main, sweep_values
from evlmodel.cohort import builtin_baselines
from evlmodel.model import ModelConfig, NearWorkObservation, evaluate_observation

ROW1_FLAGS = ["--age", "9", "--near-work", "reading", "--t", "30", "--lux", "987",
              "--pupil", "8", "--distance", "0.1", "--aberrations", "53"]
OBS_HEADER = "subject_id,age,near_work_type,t_min,lux,image_path,pupil_mm,distance_m,aberrations,ser\n"
TABLE_OBS = OBS_HEADER + """r1,9,reading,30,987,,8,0.1,53,-0.65
r2,9,reading,120,987,,8,0.1,53,-1.1
r3,11,writing,30,987,,6,0.1,54,-0.83
r4,11,writing,30,207,,6,0.1,54,-1.5
r5,13,phone,30,987,,4,0.1,55,-1.2
r6,13,phone,30,987,,4,0.05,55,-2.4
r7,15,reading,30,987,,8,0.1,54,-1.1
r8,15,reading,60,207,,8,0.1,54,-3.2
"""


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestEval:
    def test_row1_text(self):
        code, out, _ = run("eval", *ROW1_FLAGS, "--mode", "unit")
        assert code == 0
        lines = dict(line.split(None, 1) for line in out.splitlines())
        assert lines["O"] == "0.9061"
        assert lines["class"] == "Balanced"

    def test_row1_csv_exact(self):
        code, out, _ = run("eval", *ROW1_FLAGS, "--mode", "unit", "--format", "csv")
        assert code == 0
        (row,) = read_csv(out)
        assert list(row) == ["m", "a", "v", "al", "ar", "vr", "o", "class"]
        ev = evaluate_observation(builtin_baselines().lookup(9),
                                  NearWorkObservation(1, 30, 987, 8, 0.1, 53),
                                  ModelConfig(elongation_mode="unit"))
        for key in ("m", "a", "v", "al", "ar", "vr", "o"):
            assert float(row[key]) == getattr(ev, key)

    def test_degenerate_distance(self):
        flags = [f if f != "0.1" else "1.0" for f in ROW1_FLAGS]
        code, _, err = run("eval", *flags)
        assert code == 3
        assert "DegenerateDistance" in err

    def test_age_out_of_range(self):
        flags = ["40" if f == "9" else f for f in ROW1_FLAGS]
        code, _, err = run("eval", *flags)
        assert code == 2 and "OutOfRange" in err

    def test_missing_flag(self):
        code, _, err = run("eval", "--age", "9")
        assert code == 2 and "--pupil" in err

    def test_bad_theta(self):
        assert run("eval", *ROW1_FLAGS, "--theta", "1.5")[0] == 2

    def test_bad_near_work(self):
        flags = ["gaming" if f == "reading" else f for f in ROW1_FLAGS]
        assert run("eval", *flags)[0] == 2

    def test_unknown_option(self):
        assert run("eval", "--bogus")[0] == 2

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "model.cfg"
        cfg.write_text("theta=0.05\nelongation_mode=unit\n")
        code, out, _ = run("eval", *ROW1_FLAGS, "--config", str(cfg))
        assert code == 0
        assert "ImbalancedLow" in out

    def test_image_lighting(self, tmp_path):
        img = tmp_path / "grey.pgm"
        img.write_bytes(b"P2 2 2 255 0 255 255 0\n")
        flags = [f for f in ROW1_FLAGS if f not in ("--lux", "987")]
        code, out, _ = run("eval", *flags, "--image", str(img), "--format", "csv")
        ref = run("eval", *ROW1_FLAGS, "--format", "csv")[1]
        assert code == 0 and out == ref


class TestCohort:
    def test_table_rows(self, tmp_path):
        obs = tmp_path / "obs.csv"
        obs.write_text(TABLE_OBS)
        code, out, _ = run("cohort", "--observations", str(obs), "--builtin", "--out", str(tmp_path / "o"))
        assert code == 0
        rows = read_csv((tmp_path / "o" / "evaluations.csv").read_text())
        assert [r["subject_id"] for r in rows] == [f"r{i}" for i in range(1, 9)]
        assert read_csv((tmp_path / "o" / "errors.csv").read_text()) == []
        trend = (tmp_path / "o" / "trend.txt").read_text()
        # model-recomputed O rises with near-work time while SER falls, so the
        # association over recomputed ratios is negative, unlike the printed column
        oracle = spearmanr([float(r["o"]) for r in rows], [float(r["ser"]) for r in rows]).statistic
        rho = float(next(l for l in trend.splitlines() if l.startswith("rho:")).split()[1])
        assert rho == pytest.approx(oracle, abs=1e-12)
        assert rho == pytest.approx(-0.6107893935757621, abs=1e-12)
        assert "direction: negative" in trend
        assert "n_pairs: 8" in out

    def test_header_only(self, tmp_path):
        obs = tmp_path / "obs.csv"
        obs.write_text(OBS_HEADER)
        code, _, _ = run("cohort", "--observations", str(obs), "--out", str(tmp_path / "o"))
        assert code == 0
        assert read_csv((tmp_path / "o" / "evaluations.csv").read_text()) == []
        assert "InsufficientData" in (tmp_path / "o" / "trend.txt").read_text()

    def test_all_rows_invalid(self, tmp_path):
        obs = tmp_path / "obs.csv"
        obs.write_text(OBS_HEADER + "a,9,reading,30,0,,8,0.1,53,\nb,40,reading,30,987,,8,0.1,53,\n")
        code, _, _ = run("cohort", "--observations", str(obs), "--out", str(tmp_path / "o"))
        assert code == 3
        errs = read_csv((tmp_path / "o" / "errors.csv").read_text())
        assert [e["error"] for e in errs] == ["NonpositiveLighting", "OutOfRange"]

    def test_partial_failure(self, tmp_path):
        obs = tmp_path / "obs.csv"
        obs.write_text(TABLE_OBS + "bad,9,reading,30,0,,8,0.1,53,-1\n")
        code, _, _ = run("cohort", "--observations", str(obs), "--out", str(tmp_path / "o"))
        assert code == 0
        assert len(read_csv((tmp_path / "o" / "evaluations.csv").read_text())) == 8

    def test_malformed_file(self, tmp_path):
        obs = tmp_path / "obs.csv"
        obs.write_text(OBS_HEADER + "a,9,gaming,30,987,,8,0.1,53,\n")
        assert run("cohort", "--observations", str(obs), "--out", str(tmp_path / "o"))[0] == 2

    def test_missing_file(self, tmp_path):
        assert run("cohort", "--observations", str(tmp_path / "none.csv"), "--out", str(tmp_path))[0] == 2

    def test_custom_baselines(self, tmp_path):
        obs, base = tmp_path / "obs.csv", tmp_path / "base.csv"
        obs.write_text(TABLE_OBS)
        base.write_text("age_lo,age_hi,al0,p0,m0,w0\n8,10,20,6,55,48\n")
        code, out, _ = run("cohort", "--observations", str(obs), "--baselines", str(base),
                           "--out", str(tmp_path / "o"))
        assert code == 0 and "evaluated: 2" in out


class TestCheckTable:
    def test_bundled(self):
        code, out, _ = run("check-table")
        assert code == 0
        body = [l for l in out.splitlines() if l.startswith("| ") and l[2].isdigit()]
        assert len(body) == 64

    def test_csv(self, tmp_path):
        code, out, _ = run("check-table", "--format", "csv", "--out", str(tmp_path))
        rows = read_csv(out)
        assert len(rows) == 64
        assert (tmp_path / "report.md").exists() and (tmp_path / "report.csv").read_text() == out
        flags = {(r["row"], r["mode"], r["column"]): r["flag"] for r in rows}
        assert all(flags[("1", "unit", c)] == "Match" for c in ("M", "AR", "VR", "O"))
        assert flags[("2", "unit", "VR")] == "Deviation"
        for row in "45678":
            assert any(flags[(row, "unit", c)] == "Deviation" for c in ("M", "AR", "VR", "O"))

    def test_tolerance_flag(self):
        rows = read_csv(run("check-table", "--format", "csv", "--tol-vr", "30")[1])
        flag = [r["flag"] for r in rows if (r["row"], r["mode"], r["column"]) == ("2", "unit", "VR")]
        assert flag == ["Match"]

    def test_recomputed_fixture(self, tmp_path):
        from evlmodel.cohort import check_paper_table, with_recomputed
        from evlmodel.ingest import load_bundled_table, serialize_printed_table
        rows = load_bundled_table()
        fixed = with_recomputed(rows, check_paper_table(rows), "unit")
        path = tmp_path / "t.csv"
        path.write_text(serialize_printed_table(fixed))
        out = read_csv(run("check-table", "--table", str(path), "--format", "csv", "--mode", "unit")[1])
        assert all(r["flag"] == "Match" for r in out if r["mode"] == "unit")

    def test_malformed_fixture(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("age_lo,age_hi\n8,10\n")
        assert run("check-table", "--table", str(path))[0] == 2


class TestSweep:
    def test_time_sweep(self):
        code, out, _ = run("sweep", "--variable", "t", "--start", "0", "--stop", "120", "--steps", "13",
                           *[f for f in ROW1_FLAGS if f not in ("--t", "30")], "--mark-crossing")
        assert code == 0
        rows = read_csv(out)
        assert list(rows[0]) == ["t", "m", "al", "ar", "vr", "o", "class", "al_star", "t_star"]
        ts = [float(r["t"]) for r in rows]
        os_ = [float(r["o"]) for r in rows]
        assert ts == [10.0 * i for i in range(13)]
        assert all(a < b for a, b in zip(os_, os_[1:]))
        t_star = float(rows[0]["t_star"])
        assert t_star == pytest.approx(24.1438, abs=1e-4)
        for t, r in zip(ts, rows):
            assert r["class"] == ("ImbalancedLow" if t < t_star else "Balanced")

    def test_empty_range(self):
        assert run("sweep", "--variable", "d", "--start", "0", "--stop", "0", "--steps", "5", *ROW1_FLAGS)[0] == 2

    def test_lighting_sweep_constant_m(self):
        flags = [f for f in ROW1_FLAGS if f not in ("--lux", "987")]
        flags[flags.index("--aberrations") + 1] = "48"
        code, out, _ = run("sweep", "--variable", "L", "--start", "207", "--stop", "987", "--steps", "5", *flags)
        assert code == 0
        assert {r["m"] for r in read_csv(out)} == {"55.0"}

    def test_distance_sweep_domain_error(self):
        code, _, err = run("sweep", "--variable", "d", "--start", "0.5", "--stop", "1.0", "--steps", "3", *ROW1_FLAGS)
        assert code == 3 and "DegenerateDistance" in err

    def test_sweep_values(self):
        assert sweep_values(0, 1, 2) == [0, 1]
        assert sweep_values(0.1, 0.3, 3)[-1] == 0.3


class TestLux:
    def test_pgm(self, tmp_path):
        img = tmp_path / "c.pgm"
        img.write_bytes(b"P2 2 2 255 0 255 255 0\n")
        code, out, _ = run("lux", str(img), "--format", "csv")
        assert code == 0 and read_csv(out)[0]["lux"] == "987.0"

    def test_dark(self, tmp_path):
        img = tmp_path / "d.pgm"
        img.write_bytes(b"P2 1 1 255 0\n")
        assert run("lux", str(img))[0] == 3

    def test_bad_magic(self, tmp_path):
        img = tmp_path / "x.pgm"
        img.write_bytes(b"P7 1 1 255 0\n")
        assert run("lux", str(img))[0] == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "evlmodel", "eval", *ROW1_FLAGS, "--format", "csv"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("m,a,v,al,ar,vr,o,class\n")
