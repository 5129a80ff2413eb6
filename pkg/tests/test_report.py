import json

import pytest
import yaml

from massgate.errors import TruthSchemaError
from massgate.oracle import Finding, FindingKind
from massgate.pipeline import analyze
from massgate.report import (
    SCHEMA_VERSION,
    Metrics,
    ScanReport,
    clustering_agreement,
    exit_code,
    load_report,
    load_truth,
    parse_truth,
    render,
    score_against_ground_truth,
)
from massgate.semantics import CrudSemantics
from massgate.spec_model import parse_spec
from specdocs import USERS_API


def ma(op, field):
    return Finding(FindingKind.MASS_ASSIGNMENT, "user", field, op, "CreateInjection", [True, False], [0, 1, 2, 3])


def users_report(findings=None):
    a = analyze(parse_spec(USERS_API))
    anns = [a.annotations[op.operation_id] for op in a.spec.operations]
    return ScanReport("scan", a.spec.title, len(anns), len(a.groups), anns, a.clusters(), a.candidates,
                      findings=findings)


def test_empty_report_round_trip(tmp_path):
    rep = ScanReport("analyze")
    d = json.loads(render(rep))
    assert d["schema_version"] == SCHEMA_VERSION
    assert d["findings"] is None and d["metrics"] is None
    p = tmp_path / "r.json"
    p.write_bytes(render(rep))
    assert load_report(p).to_dict() == rep.to_dict()


def test_full_report_round_trip():
    rep = users_report([ma("register_new_user", "admin")])
    rep.metrics = Metrics(1.0, 1.0, 0.5, 1, 0, 0, 1.0, 1.0)
    rep.warnings = ["w"]
    back = ScanReport.from_dict(json.loads(render(rep)))
    assert back.to_dict() == rep.to_dict()


def test_rejects_other_schema():
    with pytest.raises(ValueError):
        ScanReport.from_dict({"schema_version": "other/9", "mode": "scan"})


def test_text_one_line_per_finding():
    findings = [ma("a", "admin"), ma("b", "credits"), Finding(FindingKind.CLEAN, "user", "x", "c")]
    text = render(users_report(findings), "text").decode()
    lines = text.splitlines()
    start = lines.index("findings")
    assert len(lines[start + 1:]) == 3
    assert "MassAssignment" in lines[start + 1] and "user.admin via a" in lines[start + 1]
    with pytest.raises(ValueError):
        render(users_report(), "xml")


def test_exit_codes():
    assert exit_code(users_report([])) == 0
    assert exit_code(users_report([Finding(FindingKind.NOT_TESTABLE, "u", "x", "o")])) == 0
    assert exit_code(users_report([Finding(FindingKind.SERVER_ERROR, "u", "x", "o")])) == 2
    assert exit_code(users_report(None)) == 0


TRUTH = """
operations:
  retrieve_all_users: {crud: read-multi, resource: user, id_output: "[].username"}
  register_new_user: {crud: create, resource: user, id_input: username}
vulnerabilities:
  - {operation: register_new_user, field: admin}
"""


def test_static_scores_on_users_api():
    m = score_against_ground_truth(users_report(), parse_truth(yaml.safe_load(TRUTH)))
    assert m.crud_correctness == 1.0
    assert m.clustering_correctness == 1.0
    assert m.resourceid_correctness == 1.0
    assert m.tp is None  # no dynamic results to score


@pytest.mark.parametrize(
    "found, tp, fp, fn, pr, re",
    [
        ([("o1", "f1"), ("o2", "f2"), ("o3", "f3")], 3, 0, 1, 1.0, 0.75),
        ([("o1", "f1"), ("o2", "f2"), ("o3", "f3"), ("o4", "f4"), ("o5", "f5")], 4, 1, 0, 0.8, 1.0),
        ([], 0, 0, 4, None, 0.0),
    ],
)
def test_precision_recall(found, tp, fp, fn, pr, re):
    truth = parse_truth({
        "operations": {},
        "vulnerabilities": [{"operation": f"o{i}", "field": f"f{i}"} for i in range(1, 5)],
    })
    report = ScanReport("scan", findings=[ma(o, f) for o, f in found])
    m = score_against_ground_truth(report, truth)
    assert (m.tp, m.fp, m.fn) == (tp, fp, fn)
    assert m.precision == (pytest.approx(pr) if pr is not None else None)
    assert m.recall == pytest.approx(re)


def test_finding_field_name_uses_leaf():
    f = Finding(FindingKind.MASS_ASSIGNMENT, "user", "profile.admin", "o", "t")
    truth = parse_truth({"operations": {}, "vulnerabilities": [{"operation": "o", "field": "admin"}]})
    assert score_against_ground_truth(ScanReport("scan", findings=[f]), truth).tp == 1


@pytest.mark.parametrize(
    "doc, msg",
    [
        ([], "operations"),
        ({"operations": {"a": {"resource": "x"}}}, "crud"),
        ({"operations": {"a": {"crud": "explode", "resource": "x"}}}, "bad crud"),
        ({"operations": {"a": {"crud": "create"}}}, "resource"),
        ({"operations": {"a": {"crud": "create", "resource": "x", "colour": 1}}}, "unknown keys"),
        ({"operations": {}, "vulnerabilities": {"a": 1}}, "list"),
        ({"operations": {}, "vulnerabilities": [{"operation": "a"}]}, "bad vulnerability"),
    ],
)
def test_truth_errors(doc, msg):
    with pytest.raises(TruthSchemaError, match=msg):
        parse_truth(doc)


def test_truth_file_errors(tmp_path):
    p = tmp_path / "t.yaml"
    p.write_text("operations: [unclosed")
    with pytest.raises(TruthSchemaError):
        load_truth(p)
    p.write_text("operations:\n  x: {crud: none}\n")
    t = load_truth(p)
    assert t.operations["x"].crud is CrudSemantics.NONE and t.vulnerabilities is None


def test_truth_paths_normalised():
    t = parse_truth({"operations": {"a": {"crud": "read-multi", "resource": "r", "id_output": "[].id"}}})
    assert t.operations["a"].id_output == "id"


def test_clustering_agreement():
    truth = {"a1": "A", "a2": "A", "a3": "A", "b1": "B", "b2": "B"}
    assert clustering_agreement({"a1": "x", "a2": "x", "a3": "x", "b1": "y", "b2": "y"}, truth) == 1.0
    # stray singleton: a3 alone in z is not at A's home
    assert clustering_agreement({"a1": "x", "a2": "x", "a3": "z", "b1": "y", "b2": "y"}, truth) == 0.8
    # merged resources: only the majority resource's operations count
    assert clustering_agreement({k: "x" for k in truth}, truth) == 0.6
    # unclustered operations are wrong
    assert clustering_agreement({"a1": "x", "a2": "x", "a3": "x"}, truth) == 0.6
    assert clustering_agreement({}, {}) is None
