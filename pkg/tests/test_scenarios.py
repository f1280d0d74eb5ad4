import json
import math
from pathlib import Path

import pytest

from spa.scenarios import (
    ScenarioError,
    builtin_document,
    builtin_names,
    compare_golden,
    load_scenario,
    run_empmap,
    run_scenario,
    schema,
    validate_document,
    write_empmaps,
)

ROOT = Path(__file__).resolve().parents[1]


def test_docs_schema_matches_packaged():
    assert json.loads((ROOT / "docs" / "scenario.schema.json").read_text()) == schema()


@pytest.mark.parametrize("name", sorted(["hikers", "mountain_key", "sublimation_two_tasks", "interleave_bog",
                                         "empowerment_map", "stoffel_transfer"]))
def test_builtin_goldens(name):
    result = run_scenario(load_scenario(name))
    bad = [r for r in result["golden"] if not r["ok"]]
    assert result["status"] == "ok", bad
    assert len(result["golden"]) == len(builtin_document(name)["expected"])


def test_builtin_names():
    assert "hikers" in builtin_names()
    with pytest.raises(ScenarioError):
        builtin_document("nope")


def test_hikers_frozen_values():
    m = run_scenario(load_scenario("hikers"))["metrics"]
    assert m["valence[fire1,g2]"] == pytest.approx(math.log2(5 / 13), abs=1e-12)
    assert m["valence[fire2,g4]"] == pytest.approx(math.log2(25 / 13), abs=1e-12)


def test_schema_errors_have_paths(tmp_path):
    doc = builtin_document("hikers")
    doc["spaces"][1]["params"]["size"] = "eight"
    with pytest.raises(ScenarioError, match="/spaces/1/params/size"):
        validate_document(doc)
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ScenarioError, match="invalid JSON"):
        load_scenario(p)
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "missing.json")


def test_lifelong_requires_environments():
    doc = builtin_document("stoffel_transfer")
    del doc["environments"]
    with pytest.raises(ScenarioError):
        validate_document(doc)


def test_file_roundtrip(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(builtin_document("sublimation_two_tasks")))
    sc = load_scenario(p)
    assert sc.source == str(p) and sc.pipeline == "plan"


def test_overrides_drop_nothing_else():
    sc = load_scenario("sublimation_two_tasks").with_overrides(m=2, n=None, horizon=30)
    assert sc.params["m"] == 2 and sc.params["n"] == 1 and sc.doc["horizon"] == 30
    with pytest.raises(ScenarioError):
        load_scenario("sublimation_two_tasks").with_overrides(m=0)


def test_compare_golden():
    rows = compare_golden({"a": 1.005, "b": ["x"], "c": True},
                          {"a": {"value": 1.0, "tol": 0.01}, "b": {"value": ["x"]}, "c": {"value": False},
                           "d": {"value": 3}})
    assert [r["ok"] for r in rows] == [True, True, False, False]


def test_empmap_outputs(tmp_path):
    result = run_empmap(load_scenario("empowerment_map"), [1, 5])
    assert result["metrics"]["E5[B]"] == math.log2(38)
    paths = write_empmaps(result, tmp_path)
    assert [p.name for p in paths] == ["empmap_n1.csv", "empmap_n5.csv"]
    rows = paths[0].read_text().splitlines()
    assert len(rows) == 7 and len(rows[0].split(",")) == 13
