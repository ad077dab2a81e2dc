import json

import pytest

from swerate.StudyLogger import StudyLogger, read_table, write_table
from swerate.cli import dispatch, load_settings
from swerate.exceptions import ProblemConfigError
from swerate.problem import preset
from swerate.rate import linear_oracle
from swerate.skeleton import load_control


def test_selftest_passes(tmp_path):
    out = tmp_path / "selftest.csv"
    assert dispatch(["selftest", "--out", str(out)]) == 0
    rows = read_table(out)
    assert {r["check"] for r in rows} >= {"eigenrelation", "ibp", "orthonormality", "pdgn0", "roundtrip_LINEAR"}
    assert (tmp_path / "manifest.json").exists()


@pytest.mark.parametrize("argv", [
    ["rate", "--bogus"],
    ["rate"],
    ["mc", "--dy", "0.3"],
    ["frobnicate"],
])
def test_usage_errors(argv):
    assert dispatch(argv) == 2


def test_help_exits_cleanly():
    assert dispatch(["--help"]) == 0


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[grid]\nfoo = 1\n")
    assert dispatch(["selftest", "--config", str(bad)]) == 2
    assert dispatch(["selftest", "--workers", "0"]) == 2
    assert dispatch(["invert"]) == 2
    with pytest.raises(ProblemConfigError):
        load_settings(tmp_path / "missing.ini")


def test_config_overrides(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[optimizer]\npenalties = 10, 100  # two stages\n[mc]\nsamples = 2000\n")
    settings = load_settings(cfg)
    assert settings["optimizer"]["penalties"] == [10.0, 100.0]
    assert settings["mc"]["samples"] == 2000
    assert settings["study"]["n_ref"] == 64


def test_rate_row_matches_closed_form(tmp_path):
    out = tmp_path / "rate.csv"
    assert dispatch(["rate", "--preset", "LINEAR", "--dy", "0.5", "--n", "8", "--out", str(out)]) == 0
    (row,) = read_table(out)
    y = float(row["y"])
    assert int(row["n"]) == 8
    assert float(row["value"]) == pytest.approx(linear_oracle(preset("LINEAR"), y, n=8).value, rel=1e-2)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "rate"
    assert "rate.csv" in manifest["outputs"]


def test_problem_file_boundary_error(tmp_path):
    problem = tmp_path / "bad.conf"
    problem.write_text("u0 = 1\n")
    assert dispatch(["rate", "--problem", str(problem), "--dy", "0.1", "--out", str(tmp_path / "r.csv")]) == 2


def test_skeleton_then_invert(tmp_path):
    path_csv = tmp_path / "path.csv"
    assert dispatch(["skeleton", "--preset", "NONLIN-A", "--radius", "1", "--out", str(path_csv)]) == 0
    rows = read_table(path_csv)
    assert list(rows[0]) == ["t", "x", "f", "f_t"]
    out = tmp_path / "inv" / "control.csv"
    assert dispatch(["invert", "--preset", "NONLIN-A", "--path", str(path_csv), "--out", str(out)]) == 0
    control = load_control(tmp_path / "inv" / "control.control")
    assert control.grid.n == 8


def test_mc_command(tmp_path):
    out = tmp_path / "mc.csv"
    argv = ["mc", "--dy", "0.3", "--eps", "0.4,0.2,0.1", "--samples", "1000", "--out", str(out)]
    assert dispatch(argv) == 0
    rows = read_table(out)
    assert [float(r["eps"]) for r in rows] == [0.4, 0.2, 0.1]
    assert all(int(r["samples"]) == 1000 for r in rows)


def test_write_table_is_deterministic(tmp_path):
    rows = [{"a": 1, "b": 0.1 + 0.2}, {"a": 2, "b": float("nan")}]
    first = write_table(rows, ["a", "b"], tmp_path / "one.csv").read_bytes()
    second = write_table(rows, ["a", "b"], tmp_path / "two.csv").read_bytes()
    assert first == second == b"a,b\n1,0.30000000000000004\n2,nan\n"
    assert write_table([], ["a", "b"], tmp_path / "empty.csv").read_bytes() == b"a,b\n"
    with pytest.raises(ValueError):
        write_table([{"a": 1}], ["a", "b"], tmp_path / "bad.csv")


def test_study_logger_manifest(tmp_path):
    study = StudyLogger(tmp_path / "run", "demo", {"seed": 3})
    study.write("t.csv", [{"x": 1}], ["x"])
    manifest = json.loads(study.close().read_text())
    assert manifest["parameters"]["seed"] == 3
    assert len(manifest["outputs"]["t.csv"]) == 64


def test_check_green_header(tmp_path):
    out = tmp_path / "bounds.csv"
    assert dispatch(["check-green", "--ns", "4,8", "--jmax", "32", "--samples", "200", "--out", str(out)]) == 0
    rows = read_table(out)
    assert list(rows[0]) == ["bound_name", "n", "estimate", "samples"]
    assert {int(r["n"]) for r in rows} == {4, 8}


def test_mc_compares_with_optimizer_rate(tmp_path):
    out = tmp_path / "mc.csv"
    argv = ["mc", "--preset", "NONLIN-A", "--dy", "0.3", "--eps", "0.4,0.2,0.1", "--samples", "1000",
            "--rate", "--out", str(out)]
    assert dispatch(argv) == 0
    assert len(read_table(out)) == 3
    slope = read_table(tmp_path / "slope.csv")
    assert list(slope[0]) == ["eps", "eps_log", "target", "relative_gap", "lower_bound_only"]
    assert [float(r["eps"]) for r in slope] == [0.4, 0.2, 0.1]
    targets = {float(r["target"]) for r in slope}
    assert len(targets) == 1 and targets.pop() > 0
    outputs = json.loads((tmp_path / "manifest.json").read_text())["outputs"]
    assert "slope.csv" in outputs


def test_mc_without_target_writes_no_slope(tmp_path):
    out = tmp_path / "mc.csv"
    argv = ["mc", "--preset", "NONLIN-A", "--dy", "0.3", "--eps", "0.4", "--samples", "1000", "--out", str(out)]
    assert dispatch(argv) == 0
    assert not (tmp_path / "slope.csv").exists()
