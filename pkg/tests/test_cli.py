import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from noma_mec import casefile
from noma_mec.cli import main
from noma_mec.experiments import SEED_ENV

B = 180e3
NOISE = 10 ** ((-173 - 30) / 10) * B

TINY_RUN = """
[experiment]
replications = 2
seed = 3
[system]
users = 4
freq_rbs = 4
max_users_per_rb = 2
[sweep]
freq_rbs = 3, 4
"""


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)


def test_missing_config_exits_nonzero(capsys):
    assert main(["run", "/nowhere/missing.ini"]) == 2
    assert "/nowhere/missing.ini" in capsys.readouterr().err


def test_bad_config_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[system]\nusers = six\n")
    assert main(["run", str(path)]) == 2
    assert f"{path}:2" in capsys.readouterr().err


def test_run_needs_exactly_one_source(tmp_path, capsys):
    assert main(["run"]) == 2
    path = tmp_path / "a.ini"
    path.write_text(TINY_RUN)
    assert main(["run", str(path), "--preset", "fig2"]) == 2


def test_run_writes_tables_and_is_reproducible(tmp_path, capsys):
    cfg = tmp_path / "tiny.ini"
    cfg.write_text(TINY_RUN)
    assert main(["run", str(cfg), "-o", str(tmp_path / "a")]) == 0
    assert main(["--threads", "2", "run", str(cfg), "-o", str(tmp_path / "b")]) == 0
    for name in ("custom_instances.csv", "custom_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_json_and_replication_override(tmp_path):
    cfg = tmp_path / "tiny.ini"
    cfg.write_text(TINY_RUN)
    assert main(["run", str(cfg), "--replications", "1", "--format", "json", "-o", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "custom_instances.json").read_text())
    assert len(doc["rows"]) == 2


def test_export_then_audit(tmp_path, capsys):
    case = tmp_path / "case.json"
    assert main(["--seed", "11", "export", "--users", "4", "--freq-rbs", "3", "--no-power-control",
                 "-o", str(case)]) == 0
    capsys.readouterr()
    code = main(["audit", str(case)])
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "# schema: noma-mec/audit/v1"
    passed = {line.split(",")[0]: line.split(",")[1] for line in out[2:]}
    # the constructive constraints hold on any heuristic output
    for c in ("C3", "C4", "C5", "C6", "C7"):
        assert passed[c] == "1"
    assert code == (0 if all(v == "1" for v in passed.values()) else 1)


def test_audit_catches_tampering(tmp_path, capsys):
    case = tmp_path / "case.json"
    main(["export", "--users", "4", "--freq-rbs", "3", "-o", str(case)])
    doc = json.loads(case.read_text())
    doc["assignment"]["cluster_order"][0] = None
    case.write_text(json.dumps(doc))
    capsys.readouterr()
    assert main(["audit", str(case)]) == 1
    lines = capsys.readouterr().out.splitlines()
    assert any(line.startswith("C3,0,") for line in lines)


def test_solve_closed_form(tmp_path, capsys):
    h, rate = 1e-10, 2e6
    path = tmp_path / "cluster.json"
    path.write_text(json.dumps({"gains": [[h]], "min_rates": [rate], "noise": NOISE, "bandwidth": B}))
    assert main(["solve", str(path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    header = lines[1].split(",")
    row = dict(zip(header, lines[2].split(",")))
    assert float(row["power_w"]) == pytest.approx(NOISE * 2 ** (rate / B) / h, rel=1e-6)
    assert float(row["margin"]) >= 0


def test_solve_infeasible_prints_certificate(tmp_path, capsys):
    path = tmp_path / "cluster.json"
    path.write_text(json.dumps({"users": [4], "gains": [[1e-14]], "min_rates": [5e6], "noise": NOISE,
                                "bandwidth": B}))
    assert main(["solve", str(path)]) == 1
    err = capsys.readouterr().err
    assert "infeasible" in err and "C1[4]" in err


def test_solve_malformed_cluster(tmp_path, capsys):
    path = tmp_path / "cluster.json"
    path.write_text(json.dumps({"gains": [[1e-10]]}))
    assert main(["solve", str(path)]) == 2


def test_oracle_table(tmp_path, capsys):
    out = tmp_path / "oracle.csv"
    assert main(["oracle", "--users", "4", "--freq-rbs", "2", "--comp-rbs", "6", "--max-users-per-rb", "2",
                 "--instances", "2", "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "# schema: noma-mec/oracle/v1"
    assert lines[1] == "instance,seed,oracle_energy_mj,heuristic_energy_mj,gap_pct"
    for line in lines[2:]:
        _, _, o, h, g = line.split(",")
        if o != "inf" and h != "inf":
            assert float(h) >= float(o) * (1 - 1e-9)
            assert float(g) == pytest.approx(100 * (float(h) - float(o)) / float(o))


def test_env_seed_changes_export(tmp_path, monkeypatch):
    main(["--seed", "1", "export", "-o", str(tmp_path / "a.json")])
    monkeypatch.setenv(SEED_ENV, "2")
    main(["--seed", "1", "export", "-o", str(tmp_path / "b.json")])
    monkeypatch.setenv(SEED_ENV, "1")
    main(["export", "-o", str(tmp_path / "c.json")])
    a, b, c = (casefile.read_case(tmp_path / f"{k}.json")[2].gains for k in "abc")
    assert (a == c).all() and not (a == b).all()


def test_case_round_trip_is_exact(tmp_path):
    main(["export", "-o", str(tmp_path / "a.json")])
    cfg, tasks, ch, a = casefile.read_case(tmp_path / "a.json")
    casefile.write_case(tmp_path / "b.json", cfg, tasks, ch, a)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


@pytest.mark.skipif(shutil.which("noma-mec") is None, reason="console script not installed")
def test_console_script_help():
    res = subprocess.run(["noma-mec", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "run" in res.stdout


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "noma_mec", "run", "/no/such.ini"], capture_output=True, text=True)
    assert res.returncode == 2 and "/no/such.ini" in res.stderr


SCRIPTS = Path(__file__).resolve().parents[1] / "scripts"


def test_oracle_gap_script_runs():
    res = subprocess.run([sys.executable, str(SCRIPTS / "oracle_gap.py"), "--users", "4", "--freq-rbs", "2",
                          "--comp-rbs", "6", "--max-users-per-rb", "2", "--instances", "1", "--seed", "1"],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert res.stdout.startswith("seed 1:")
