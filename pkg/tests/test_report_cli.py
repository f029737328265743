import json

import pytest

from ricciclass import __version__
from ricciclass.cli import main
from ricciclass.corpus import export_family, instantiate_family
from ricciclass.dsl import spec_hash
from ricciclass.report import (
    CONDITIONS, ReportDocument, classify, condition_id, emit_report, parse_report, run_condition,
)
from ricciclass.sampling import SamplingConfig

from support import SPHERE3, flat

CFG = SamplingConfig(points=20)


@pytest.fixture
def rr_file(tmp_path):
    path = tmp_path / "rr.rfm"
    path.write_text(export_family("rr-3d"))
    return path


@pytest.fixture
def sphere_file(tmp_path):
    path = tmp_path / "sphere.rfm"
    path.write_text(SPHERE3)
    return path


# ---------------------------------------------------------------- reports

def test_condition_aliases():
    assert condition_id("rr") == "RR"
    assert condition_id("cotton") == "CO"
    with pytest.raises(ValueError):
        condition_id("xyz")


def test_classify_runs_applicable_conditions():
    reports = classify(instantiate_family("rr-3d"), CFG)
    assert [r.id for r in reports] == [c for c in CONDITIONS if c != "QE2"]
    by = {r.id: r for r in reports}
    assert any(n.startswith("consistent") for n in by["CO"].notes)


def test_classify_includes_hessian_condition_with_lambda():
    assert "QE2" in [r.id for r in classify(instantiate_family("qe2-3d"), CFG)]


def test_classify_with_no_conditions():
    assert classify(instantiate_family("rr-3d"), CFG, conditions=()) == []


def test_document_schema_and_round_trip():
    spec = instantiate_family("prs-3d")
    doc = ReportDocument.for_spec(spec, classify(spec, CFG))
    d = json.loads(emit_report(doc))
    assert set(d) == {"version", "spec_hash", "conditions", "timing_ms"}
    assert d["version"] == __version__ and d["spec_hash"] == spec_hash(spec) and d["timing_ms"] == 0
    for c in d["conditions"]:
        assert set(c) == {"id", "points_used", "points_skipped", "max_residual", "mean_residual",
                          "verdict", "recovered", "notes"}
        assert c["verdict"] in ("holds", "fails", "inconclusive")
    assert parse_report(emit_report(doc)) == doc


def test_human_format_lists_each_condition():
    spec = instantiate_family("rr-3d")
    text = emit_report(ReportDocument.for_spec(spec, classify(spec, CFG)), "human")
    for cid in ("RR", "PRS", "CO", "QE1"):
        assert any(line.startswith(cid) for line in text.splitlines())
    with pytest.raises(ValueError):
        emit_report(ReportDocument.for_spec(spec, []), "xml")


def test_reports_are_reproducible():
    spec = instantiate_family("qe1-3d")
    a = emit_report(ReportDocument.for_spec(spec, classify(spec, CFG)))
    b = emit_report(ReportDocument.for_spec(spec, classify(spec, CFG)))
    assert a == b


def test_seed_changes_points_but_not_verdicts():
    spec = instantiate_family("rr-3d")
    a = run_condition(spec, "RR", CFG)
    b = run_condition(spec, "RR", CFG.with_(seed=7))
    assert a.verdict == b.verdict
    assert a.recovered["beta"][0]["point"] != b.recovered["beta"][0]["point"]


def test_two_dimensional_specs_skip_cotton():
    spec = flat(2)
    assert "CO" not in [r.id for r in classify(spec, CFG)]


# ---------------------------------------------------------------- command line

def test_check_holds_exits_zero(rr_file, capsys):
    assert main(["check", str(rr_file), "--condition", "rr", "--points", "20", "--expect", "holds"]) == 0
    out = capsys.readouterr().out
    assert "RR" in out and "holds" in out


def test_check_expectation_mismatch_exits_two(rr_file):
    assert main(["check", str(rr_file), "--condition", "prs", "--points", "20", "--expect", "holds"]) == 2


def test_check_bad_file_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.rfm"
    bad.write_text("manifold b\ndim 2\ncoords x y\nmetric diag: 1, (x\n")
    assert main(["check", str(bad), "--condition", "rr"]) == 1
    assert "ricciclass: error:" in capsys.readouterr().err
    assert main(["check", str(tmp_path / "missing.rfm"), "--condition", "rr"]) == 1


def test_check_json_is_byte_identical(sphere_file, tmp_path, capsys):
    outs = []
    for k in range(2):
        path = tmp_path / f"r{k}.json"
        assert main(["check", str(sphere_file), "--condition", "classify", "--points", "20",
                     "--json", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    doc = parse_report(outs[0].decode())
    assert {c.id for c in doc.conditions} == {"RR", "PRS", "CO", "QE1"}


def test_check_json_to_stdout(sphere_file, capsys):
    main(["check", str(sphere_file), "--condition", "co", "--points", "10", "--json", "-"])
    d = json.loads(capsys.readouterr().out)
    assert d["conditions"][0]["id"] == "CO"


def test_check_timing_flag(sphere_file, capsys):
    main(["check", str(sphere_file), "--condition", "co", "--points", "10", "--json", "-", "--timing"])
    assert json.loads(capsys.readouterr().out)["timing_ms"] >= 0


def test_check_domain_override(rr_file, capsys):
    main(["check", str(rr_file), "--condition", "rr", "--points", "10", "--domain", "x2=1:1.5",
          "--json", "-"])
    d = json.loads(capsys.readouterr().out)
    for row in d["conditions"][0]["recovered"]["beta"]:
        assert 1.0 <= row["point"]["x2"] <= 1.5


def test_curvature_command(sphere_file, capsys):
    assert main(["curvature", str(sphere_file), "--at", "a=1,b=1,c=0", "--tensor", "scalar"]) == 0
    assert capsys.readouterr().out.strip() == "scalar = 6"
    main(["curvature", str(sphere_file), "--at", "a=1,b=1,c=0", "--tensor", "ricci", "--json"])
    d = json.loads(capsys.readouterr().out)
    assert d["components"]["1,1"] == pytest.approx(2.0)
    assert "1,2" not in d["components"]
    assert main(["curvature", str(sphere_file), "--at", "a=1"]) == 1


def test_corpus_commands(tmp_path, capsys):
    assert main(["corpus", "list"]) == 0
    assert "rr-3d" in capsys.readouterr().out
    target = tmp_path / "prs.rfm"
    assert main(["corpus", "export", "prs-3d", str(target)]) == 0
    assert target.read_text() == export_family("prs-3d")
    assert main(["corpus", "verify", "rr-3d", "--params", "m=3,c3=20"]) == 0
    assert "1/1 families verified" in capsys.readouterr().out
    assert main(["corpus", "verify", "nope"]) == 1


def test_ode_commands(capsys):
    assert main(["ode", "list"]) == 0
    assert "qe1-4d1" in capsys.readouterr().out
    assert main(["ode", "run", "qe2-4d1", "--verify", "qe2", "--points", "10", "--expect", "holds"]) == 0
    out = capsys.readouterr().out
    assert "half-step estimate" in out and "QE2" in out
    assert main(["ode", "run", "qe1-4d1", "--step", "0.5"]) == 1


def test_ode_json_document(capsys):
    main(["ode", "run", "qe2-4d1", "--verify", "co", "--points", "10", "--json", "-"])
    out = capsys.readouterr().out
    d = json.loads(out[out.index("{"):])
    assert d["spec_hash"] == "ode:qe2-4d1"
