import json

import pytest

import cli
from vemsolver.utils.results import read_diagnostics, read_snapshots


def _run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = cli.main(["run", "--out", str(out), *args])
    return code, out


def test_list(capsys):
    assert cli.main(["list"]) == 0
    output = capsys.readouterr().out
    for name in ("example1", "example2", "example3"):
        assert name in output


@pytest.mark.parametrize("case", ["example1", "example2", "example3"])
def test_describe(case, capsys):
    assert cli.main(["describe", case]) == 0
    output = capsys.readouterr().out
    assert f"case: {case}" in output
    assert "integrated values:" in output


def test_describe_example2_layout(capsys):
    assert cli.main(["describe", "example2"]) == 0
    output = capsys.readouterr().out
    assert "dimensions: n=2, m=1" in output
    assert "fixed tf=2" in output
    assert "integrated values: 205 total, 201 free" in output


def test_describe_example3_horizon(capsys):
    assert cli.main(["describe", "example3", "--n-points", "21"]) == 0
    output = capsys.readouterr().out
    assert "free tf (initial 1)" in output
    assert "grid: N=21" in output
    assert "optimal tf=0.8165" in output


def test_unknown_case(tmp_path, capsys):
    code, _ = _run(tmp_path, "--case", "nosuch")
    assert code == 1
    assert "unknown case" in capsys.readouterr().err


def test_run_example1(tmp_path, capsys):
    code, out = _run(tmp_path, "--case", "example1", "--tau-max", "6")
    assert code == 0
    for name in ("snapshots.csv", "diagnostics.csv", "summary.json", "timing.json"):
        assert (out / name).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["case"] == "example1"
    assert summary["stop_reason"] == "tau_max"
    assert summary["max_error"] <= 1e-2
    assert summary["descent_ok"] is True
    assert summary["tf"] == pytest.approx(3.141592653589793)

    rows = read_diagnostics(out / "diagnostics.csv")
    assert rows[0]["tau"] == 0.0 and rows[-1]["tau"] == pytest.approx(6.0)
    assert all(row["tf"] is None and row["J1"] is None for row in rows)
    snapshots = read_snapshots(out / "snapshots.csv")
    assert len(snapshots) == len(rows)
    assert all(values.shape == (101, 1) for values in snapshots.values())
    assert "example1: tau_max" in capsys.readouterr().out


def test_reruns_are_identical(tmp_path):
    args = ("--case", "example1", "--tau-max", "1", "--n-points", "21")
    first_code, first = _run(tmp_path, *args, name="first")
    second_code, second = _run(tmp_path, *args, name="second")
    assert first_code == second_code == 0
    for name in ("snapshots.csv", "diagnostics.csv", "summary.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["run", "--case", "example1", "--out", str(blocker)]) == 1
    assert "not writable" in capsys.readouterr().err


def _error_lines(err):
    return [line for line in err.splitlines() if line.startswith("error:")]


@pytest.mark.parametrize("args", [
    ["--n-points", "3"],
    ["--gain-k", "-1"],
    ["--gain-k", "a,b"],
    ["--guess", "ramp"],
])
def test_invalid_options(tmp_path, args, capsys):
    code, _ = _run(tmp_path, "--case", "example1", *args)
    assert code == 1
    err = capsys.readouterr().err
    assert err.strip().splitlines()[-1].startswith("error:")
    assert len(_error_lines(err)) == 1
    assert " - ERROR - " not in err


@pytest.mark.parametrize("argv", [
    ["run", "--case", "example1", "--bogus"],
    ["run", "--case", "example1", "--n-points", "many"],
    ["run"],
    ["describe", "example1", "--method", "euler"],
])
def test_usage_errors_exit_with_one(argv, capsys):
    assert cli.main(argv) == cli.EXIT_ERROR
    err = capsys.readouterr().err
    assert err.strip().splitlines()[-1].startswith("error:")
    assert "usage:" in err


def test_default_horizon_without_convergence(tmp_path):
    code, out = _run(tmp_path, "--case", "example1", "--n-points", "21", "--residual-tol", "1e-30")
    assert code == 2
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] is False
    assert summary["stop_reason"] == "tau_max"


def test_run_config_parses_gain_lists():
    config = cli.RunConfig(case="example2", gain_k="1,1,2,2,1")
    assert config.case_overrides()["gains"]["K"] == [1.0, 1.0, 2.0, 2.0, 1.0]
    assert not config.explicit_horizon
