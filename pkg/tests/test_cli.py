import csv
import io
import json

import pytest

from hybridcap.cli import main, validate_rows


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_analyze_point(capsys):
    code, out, _ = run(capsys, "analyze", "--d", "1", "--eta", "1", "--xi", "2")
    assert code == 0
    (row,) = rows_of(out)
    assert float(row["mu2"]) == pytest.approx(0.5401507, abs=1e-7)
    assert float(row["delta_mu"]) == pytest.approx(0.4080301, abs=1e-7)
    assert row["limit_mode"] == "as-printed"


def test_analyze_sweep(capsys):
    code, out, _ = run(capsys, "analyze", "--sweep", "d", "--from", "0.5", "--to", "2", "--steps", "4")
    rows = rows_of(out)
    assert code == 0 and [float(r["d"]) for r in rows] == [0.5, 1.0, 1.5, 2.0]
    assert all(r["mu0"] == r["mu1"] for r in rows)


def test_bound_both_variants(capsys):
    code, out, _ = run(capsys, "bound", "--cells", "3", "--A", "2", "--N", "4", "--r1", "2", "--r2", "1",
                       "--variant", "all")
    rows = rows_of(out)
    assert code == 0 and [r["variant"] for r in rows] == ["as-printed", "event-consistent"]
    assert float(rows[1]["p4"]) == pytest.approx(4 / 27, abs=1e-15)
    assert rows[0]["p5"] == rows[1]["p5"] and rows[0]["p4"] != rows[1]["p4"]


def test_bound_json_mirrors_csv(capsys):
    argv = ["bound", "--width", "3", "--height", "3", "--A", "5", "--N", "10", "--r1", "2", "--r2", "1"]
    _, out_csv, _ = run(capsys, *argv)
    _, out_json, _ = run(capsys, *argv, "--format", "json")
    row = rows_of(out_csv)[0]
    data = json.loads(out_json)[0]
    assert set(row) == set(data)
    assert float(row["mu"]) == data["mu"]


def test_simulate_rows_and_z(capsys):
    code, out, _ = run(capsys, "simulate", "--width", "4", "--height", "4", "--A", "4", "--N", "32",
                       "--r1", "2", "--r2", "1", "--slots", "20000")
    rows = {r["strategy"]: r for r in rows_of(out)}
    assert code == 0
    assert {"p5", "p3", "q1", "q2", "bound"} <= set(rows)
    assert abs(float(rows["p5"]["z_score"])) < 4


def test_simulate_with_relay(capsys):
    code, out, _ = run(capsys, "simulate", "--cells", "4", "--N", "8", "--r1", "2", "--r2", "1",
                       "--slots", "2000", "--lambda", "0.1")
    rows = {r["strategy"]: r for r in rows_of(out)}
    assert code == 0 and "delivered_rate" in rows


def test_simulate_byte_identical(tmp_path):
    argv = ["simulate", "--cells", "9", "--A", "3", "--N", "12", "--r1", "2", "--r2", "1", "--slots", "3000",
            "--seed", "17"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    main(argv[:-1] + ["18", "--out", str(c)])
    assert c.read_bytes() != a.read_bytes()


def test_optimize_annotates_published_value(capsys):
    code, out, _ = run(capsys, "optimize", "mu1")
    (row,) = rows_of(out)
    assert code == 0
    assert float(row["d_opt"]) == pytest.approx(1.7933, abs=1e-3)
    assert float(row["mu_max"]) == pytest.approx(0.1492, abs=5e-4)
    assert row["paper_mu_max"] == "0.1942" and row["note"]


def test_optimize_mu2_boundary(capsys):
    code, out, _ = run(capsys, "optimize", "mu2", "--eta", "1", "--xi", "2")
    (row,) = rows_of(out)
    assert code == 0 and row["at_boundary"] == "true"


def test_design(capsys):
    code, out, _ = run(capsys, "design", "--d", "1", "--eta-steps", "10", "--xi-steps", "5")
    (row,) = rows_of(out)
    assert code == 0 and float(row["eta_opt"]) == 1.0 and float(row["xi_opt"]) == 2.0


def test_validate_small(capsys):
    code, out, err = run(capsys, "validate", "--max-cells", "2", "--max-nodes", "4")
    assert code == 0
    rows = rows_of(out)
    assert not [r for r in rows if r["kind"] == "discrepancy" and r["variant"] == "event-consistent"]
    assert "event-consistent" in err


def test_validate_rows_as_printed_only_p4():
    rows = [r for r in validate_rows(3, 6) if r["kind"] == "discrepancy"]
    assert rows and {r["entry"] for r in rows} == {"p4"}
    assert {r["variant"] for r in rows} == {"as-printed"}


def test_config_file_and_alias(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"d": 2.0, "eta": 0.5, "output": "json"}))
    code, out, _ = run(capsys, "analyze", "--config", str(cfg), "--xi", "4")
    data = json.loads(out)[0]
    assert code == 0 and (data["d"], data["eta"], data["xi"]) == (2.0, 0.5, 4.0)


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"d": 2.0}))
    _, out, _ = run(capsys, "analyze", "--config", str(cfg), "--d", "3")
    assert float(rows_of(out)[0]["d"]) == 3.0


@pytest.mark.parametrize("argv", [
    ["analyze", "--xi", "1.5"],
    ["analyze", "--eta", "2"],
    ["bound", "--cells", "4", "--N", "5"],
    ["bound", "--cells", "4", "--A", "5", "--N", "4"],
    ["bound", "--cells", "4"],
    ["bound", "--cells", "4", "--N", "4", "--pi-source", "/nonexistent/matrix.txt"],
    ["simulate", "--cells", "4", "--N", "4", "--r1", "2.5", "--r2", "1", "--lambda", "0.5"],
])
def test_configuration_errors_exit_1(argv, capsys):
    code, out, err = run(capsys, *argv)
    assert code == 1 and out == "" and "configuration error" in err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"density": 2.0}))
    code, _, err = run(capsys, "analyze", "--config", str(cfg))
    assert code == 1 and "density" in err


def test_usage_error_exits_1():
    with pytest.raises(SystemExit) as info:
        main(["analyze", "--no-such-flag"])
    assert info.value.code == 1


def test_numerical_error_exits_2(tmp_path, capsys):
    # periodic chain whose stationary law is not uniform: the power iteration cycles
    path = tmp_path / "P.txt"
    path.write_text("0 1 0\n0.5 0 0.5\n0 1 0\n")
    code, out, err = run(capsys, "bound", "--cells", "3", "--A", "1", "--N", "4", "--pi-source", str(path))
    assert code == 2 and out == "" and "numerical error" in err


def test_failed_run_leaves_no_file(tmp_path, capsys):
    target = tmp_path / "out.csv"
    code, _, _ = run(capsys, "analyze", "--xi", "1", "--out", str(target))
    assert code == 1
    assert list(tmp_path.iterdir()) == []


def test_existing_file_untouched_on_error(tmp_path, capsys):
    target = tmp_path / "out.csv"
    target.write_text("keep\n")
    run(capsys, "analyze", "--eta", "-1", "--out", str(target))
    assert target.read_text() == "keep\n"
