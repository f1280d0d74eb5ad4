import json
import subprocess
import sys

import pytest

from spa.cli import main
from spa.scenarios import builtin_document


def test_solve_writes_reports(tmp_path, capsys):
    assert main(["solve", "--builtin", "hikers", "--out", str(tmp_path)]) == 0
    first = capsys.readouterr().out.splitlines()[0]
    assert json.loads(first) == {"scenario": "hikers", "status": "ok", "best": ["fire2", "g4"]}
    report = json.loads((tmp_path / "plan_report.json").read_text())
    assert report["best"]["policies"] == ["fire2", "g4"]
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["status"] == "ok"


def test_solve_csv(tmp_path):
    assert main(["solve", "--builtin", "sublimation_two_tasks", "--format", "csv", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "plan_report.csv").read_text().splitlines()
    assert rows[0] == "policies,final_state,final_empowerment,valence,best"
    assert any(r.startswith("D E F,") and r.endswith(",1") for r in rows)


def test_overrides_skip_goldens(capsys):
    assert main(["solve", "--builtin", "sublimation_two_tasks", "--m", "2"]) == 0
    out = capsys.readouterr().out
    assert "MISMATCH" not in out and "ok " not in out


def test_golden_mismatch_exit_code(tmp_path, capsys):
    doc = builtin_document("sublimation_two_tasks")
    doc["expected"]["best"]["value"] = ["E"]
    p = tmp_path / "s.json"
    p.write_text(json.dumps(doc))
    assert main(["solve", "--file", str(p)]) == 2
    assert "MISMATCH best" in capsys.readouterr().out


def test_invalid_inputs_exit_1(tmp_path, capsys):
    assert main(["empmap", "--builtin", "empowerment_map", "--ns", "0", "--out", str(tmp_path)]) == 1
    assert capsys.readouterr().err.startswith("error:")
    bad = tmp_path / "bad.json"
    doc = builtin_document("hikers")
    doc["horizon"] = -1
    bad.write_text(json.dumps(doc))
    assert main(["validate", str(bad)]) == 1
    assert "/horizon" in capsys.readouterr().err
    assert main(["solve", "--builtin", "nope"]) == 1
    assert main(["lifelong", "--builtin", "hikers"]) == 1


def test_empmap(tmp_path, capsys):
    assert main(["empmap", "--builtin", "empowerment_map", "--ns", "1,5", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "empmap_n1.csv").exists() and (tmp_path / "empmap_n5.csv").exists()


def test_lifelong(tmp_path):
    assert main(["lifelong", "--builtin", "stoffel_transfer", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "lifelong.jsonl").read_text().splitlines()
    events = [json.loads(x) for x in lines]
    assert sum(e["event"] == "observation" for e in events) == 3
    report = json.loads((tmp_path / "transfer_report.json").read_text())
    assert report["status"] == "ok"


def test_bench_scaling_csv(tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["bench", "scaling", "--max-spaces", "1", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "method,num_secondary,N,M,n,trial,seed,seconds,status" and len(rows) == 3


def test_validate_export_list(tmp_path, capsys):
    assert main(["export", "--builtin", "hikers"]) == 0
    doc = capsys.readouterr().out
    p = tmp_path / "h.json"
    p.write_text(doc)
    assert main(["validate", str(p)]) == 0
    assert capsys.readouterr().out.strip().endswith("valid")
    assert main(["export", "--schema"]) == 0
    assert json.loads(capsys.readouterr().out)["type"] == "object"
    assert main(["list"]) == 0
    assert "stoffel_transfer\tlifelong" in capsys.readouterr().out


def test_bad_arguments_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--builtin", "hikers", "--emp", "bogus"])
    assert exc.value.code == 2


def test_console_script_entry():
    out = subprocess.run([sys.executable, "-m", "spa.cli", "list", "-v"], capture_output=True, text=True)
    assert out.returncode == 0 and "hikers" in out.stdout
