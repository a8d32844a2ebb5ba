import json

import pytest

from qpmdesign import cli
from qpmdesign.poling import CSV_HEADER


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_gvm_text(capsys):
    code, out, _ = run(["gvm"], capsys)
    assert code == 0
    assert out.startswith("GVM wavelength: 1584.")
    assert "1310.000" in out


def test_gvm_json(capsys):
    code, out, _ = run(["gvm", "--json", "--at", "1550"], capsys)
    data = json.loads(out)
    assert code == 0
    assert len(data["rows"]) == 2


def test_missing_wavelength_is_config_error(capsys):
    code, _, err = run(["evaluate", "--periodic"], capsys)
    assert code == 2
    assert "wavelength" in err


def test_out_of_window_wavelength(capsys):
    code, _, err = run(["evaluate", "--periodic", "--wavelength-nm", "600"], capsys)
    assert code == 2
    assert "window" in err


def test_bad_rates(capsys):
    code, _, _ = run(["design", "--wavelength-nm", "1550", "--rates", "0.1"], capsys)
    assert code == 2


def test_missing_profile_file(tmp_path, capsys):
    code, _, _ = run(["evaluate", str(tmp_path / "nope.csv"), "--wavelength-nm", "1550"],
                     capsys)
    assert code == 4


def test_malformed_profile(tmp_path, capsys):
    f = tmp_path / "bad.csv"
    f.write_text(",".join(CSV_HEADER) + "\n0,0,zz,0,0\n")
    code, _, err = run(["evaluate", str(f), "--wavelength-nm", "1550"], capsys)
    assert code == 4
    assert "row 2" in err


def test_inadmissible_profile_names_index(tmp_path, capsys):
    f = tmp_path / "bad.csv"
    rows = [",".join(CSV_HEADER)] + [f"{j},{j * 45e-6!r},0.5,0,0" for j in range(3)]
    rows[2] = "1,4.5e-05,1.5,0,0"
    f.write_text("\n".join(rows) + "\n")
    code, _, err = run(["evaluate", str(f), "--wavelength-nm", "1550"], capsys)
    assert code == 2
    assert "index 1" in err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"wavelength_nm": 1310, "filters_nm": [8], "learn":
                               {"max_iterations": 5}}))
    args = cli.build_parser().parse_args(
        ["design", "--config", str(cfg), "--wavelength-nm", "1550", "--iters", "7"])
    req = cli.resolve_request(args)
    assert req.wavelength_nm == 1550
    assert req.filters_nm == (8.0,)
    assert req.learn.max_iterations == 7


def test_strict_turns_warnings_into_failure(monkeypatch, capsys):
    monkeypatch.setitem(cli.COMMANDS, "design", lambda args: {"warnings": ["w"]})
    assert cli.main(["design", "--wavelength-nm", "1550"]) == 0
    assert cli.main(["design", "--wavelength-nm", "1550", "--strict"]) == 3


@pytest.mark.slow
def test_evaluate_round_trip(design_runs, capsys):
    report, _, out, _ = design_runs.get(1550.0)
    code, text, _ = run(["evaluate", str(out / "profile.csv"), "--wavelength-nm", "1550"],
                        capsys)
    assert code == 0
    table = json.loads(text)["purity_table"]
    for got, want in zip(table, report["purity_table"]):
        assert abs(got["purity"] - want["purity"]) < 1e-6


@pytest.mark.slow
def test_evaluate_periodic_matches_baseline(design_runs, capsys):
    report, _, _, _ = design_runs.get(1550.0)
    code, text, _ = run(["evaluate", "--periodic", "--wavelength-nm", "1550"], capsys)
    assert code == 0
    table = json.loads(text)["purity_table"]
    for got, want in zip(table, report["purity_table"]):
        assert abs(got["purity"] - want["baseline_purity"]) < 1e-6


@pytest.mark.slow
def test_design_outputs(design_runs):
    report, profile, out, _ = design_runs.get(1550.0)
    saved = json.loads((out / "report.json").read_text())
    assert saved["cost_history"] == report["cost_history"]
    assert len(saved["dispersion"]["sha256"]) == 64
    lines = (out / "cost_history.csv").read_text().splitlines()
    assert lines[0] == "iteration,cost"
    assert len(lines) == len(report["cost_history"]) + 1
    for key in ("jsa_intensity", "jsa_log_intensity", "jsa_sidecar", "profile_meta"):
        assert key in report["files"]


@pytest.mark.slow
def test_dump_jsa(design_runs, tmp_path, capsys):
    _, _, out, _ = design_runs.get(1550.0)
    code, text, _ = run(["dump-jsa", str(out / "profile.csv"), "--wavelength-nm", "1550",
                         "--grid", "128", "--log", "--out", str(tmp_path)], capsys)
    assert code == 0
    paths = json.loads(text)
    meta = json.loads(open(paths["sidecar"]).read())
    assert meta["grid"]["points"] == [128, 128]
    assert 0 < meta["purity"] <= 1
