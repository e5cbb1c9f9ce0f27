import csv
import io
from pathlib import Path

import numpy as np
import pytest

from bulksorp import cli
from bulksorp.disc import read_snapshot
from bulksorp.harness import PropertyReport
from bulksorp.scenarios import builtin_text

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_run_writes_csv_schema(capsys, tmp_path):
    path = tmp_path / "heat.csv"
    code, _, err = run_cli(capsys, "run", "builtin:heat_16", "--csv", str(path))
    assert code == 0
    assert "reason=reached_T" in err
    lines = path.read_text().splitlines()
    assert lines[0] == "t,species,l1_bulk,l2_bulk,linf_bulk,l1_surf,l2_surf,linf_surf,total_mass"
    rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
    assert [r[0] for r in rows] == ["0", "0.050000000000000003"]
    assert all(r[1] == "u" for r in rows)
    # initial data 1 + cos(pi x) on 16 cells: L1 norm equals the mean, 1
    assert float(rows[0][2]) == pytest.approx(1.0, abs=1e-14)
    assert float(rows[0][8]) == pytest.approx(1.0, abs=1e-14)


def test_csv_values_round_trip():
    class Fake:
        times = np.array([0.1])
        norms = np.array([[[1 / 3, np.pi, 2.0**-40, 0.0, 1e300, 7.0]]])
        masses = np.array([[np.e]])

    buf = io.StringIO()
    cli.write_csv(buf, Fake, ["X"])
    row = buf.getvalue().splitlines()[1].split(",")
    assert row[1] == "X"
    vals = [float(v) for v in row[2:]]
    assert vals == [*Fake.norms[0, 0], np.e]
    assert float(row[0]) == 0.1


def test_run_is_byte_identical(capsys):
    a = run_cli(capsys, "run", "builtin:comparison_langmuir", "--t-end", "0.2")
    b = run_cli(capsys, "run", "builtin:comparison_langmuir", "--t-end", "0.2")
    assert a[0] == b[0] == 0
    assert a[1] == b[1] and a[1].startswith("t,species,")


def test_run_blowup_exit_code(capsys):
    code, out, err = run_cli(capsys, "run", str(CONFIGS / "henry_blowup.cfg"))
    assert code == 3
    assert "reason=blowup" in err
    t_est = float(err.split("T_est=")[1].split()[0])
    assert abs(t_est - 1.0) <= 0.05
    assert out.startswith("t,species,")


def test_run_dt_underflow_exit_code(capsys, tmp_path):
    text = builtin_text("henry_blowup").replace("output_every = 0.05", "output_every = 0.05\ndt_init = 0.5\n"
                                                 "dt_min = 0.5\ndt_max = 0.5")
    path = tmp_path / "coarse.cfg"
    path.write_text(text)
    code, _, err = run_cli(capsys, "run", str(path), "--csv", str(tmp_path / "x.csv"))
    assert code == 3 and "reason=dt_underflow" in err


def test_snapshots(capsys, tmp_path):
    snap = tmp_path / "snaps"
    code, _, _ = run_cli(capsys, "run", "builtin:comparison_henry", "--t-end", "0.25",
                         "--snapshot-dir", str(snap), "--csv", str(tmp_path / "c.csv"))
    assert code == 0
    files = sorted(snap.iterdir())
    # output every 0.1 up to 0.25: t = 0, 0.1, 0.2 and the final 0.25
    assert [f.name for f in files] == [f"snapshot_{k:05d}.txt" for k in range(4)]
    first, last = read_snapshot(files[0]), read_snapshot(files[-1])
    assert float(first["header"]["t"]) == 0.0
    assert float(last["header"]["t"]) == pytest.approx(0.25)
    assert first["header"]["species"] == "A B"


def test_config_errors_exit_2(capsys, tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text(builtin_text("henry_blowup").replace("k_ad = 1.0", "k_ad = -1"))
    code, _, err = run_cli(capsys, "run", str(path))
    assert code == 2
    assert "[sorption] k_ad" in err and "line" in err
    code, _, _ = run_cli(capsys, "run", str(tmp_path / "missing.cfg"))
    assert code == 2


def test_usage_errors_exit_1(capsys):
    assert run_cli(capsys, "frobnicate")[0] == 1
    assert run_cli(capsys)[0] == 1
    assert run_cli(capsys, "exponents", "--p", "2")[0] == 1
    assert run_cli(capsys, "exponents", "--d", "3", "--p", "0.5")[0] == 1
    assert run_cli(capsys, "run", "builtin:does_not_exist")[0] == 1
    code, _, err = run_cli(capsys, "verify", "--only", "no_such_property")
    assert code == 1 and "no property matches" in err


def test_exponents_quoted_point(capsys):
    code, out, _ = run_cli(capsys, "exponents", "--d", "3", "--p", "2.5", "--komega", "1", "--ksigma", "1",
                           "--format", "kv")
    assert code == 0
    heads = [line for line in out.splitlines() if " rule=" not in line]
    assert heads == ["predicate=sorption_trace admissible=true mode=any",
                     "predicate=assumption_sorption admissible=true mode=all",
                     "predicate=local_wellposedness admissible=true mode=gate+any"]
    code, out, _ = run_cli(capsys, "exponents", "--d", "3", "--p", "2.5")
    assert out.count("ADMISSIBLE") == 3 and "NOT ADMISSIBLE" not in out


def test_check_model(capsys):
    code, out, _ = run_cli(capsys, "check-model", "builtin:comparison_langmuir", "--samples", "128")
    assert code == 0
    lines = out.splitlines()
    assert any(line.startswith("CHECK quasi_positivity[bulk] pass") for line in lines)
    assert any(line.startswith("CHECK triangular[bulk] pass") for line in lines)
    assert "growth[bulk] gamma=2" in out


def test_verify_only_heat(capsys):
    code, out, _ = run_cli(capsys, "verify", "--only", "heat_convergence")
    assert code == 0
    assert out.startswith("PROP heat_convergence pass measured=")
    assert len(out.splitlines()) == 1


def test_verify_failure_exit_4(capsys, monkeypatch):
    import bulksorp.harness as harness

    fake = [("good", lambda: PropertyReport("good", "pass", 0, 1, 0, "")),
            ("bad", lambda: PropertyReport("bad", "fail", 2, 1, 0, "")),
            ("soft", lambda: PropertyReport("soft", "heuristic", 2, 1, 0, ""))]
    monkeypatch.setattr(harness, "suite", lambda: fake)
    code, out, _ = run_cli(capsys, "verify")
    assert code == 4
    assert out.splitlines() == ["PROP good pass measured=0 tol=1", "PROP bad fail measured=2 tol=1",
                                "PROP soft heuristic measured=2 tol=1"]
    code, _, _ = run_cli(capsys, "verify", "--only", "good", "--only", "soft")
    assert code == 0
