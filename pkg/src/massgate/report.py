"""Scan reports: JSON/text rendering and scoring against a ground-truth file.

Ground truth is a small YAML document::

    operations:
      register_user:            # operation id as it appears in the report
        crud: create            # create|read|read-multi|update|delete|none
        resource: user          # required unless crud is none
        id_input: username      # field path, or omit/null when absent
        id_output: null
    vulnerabilities:            # optional; omit for a static-only truth file
      - operation: register_user
        field: admin

Resource-id paths are compared with list wrappers removed, so ``[].id`` and
``id`` are the same field.
"""

from __future__ import annotations

import io
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import TruthSchemaError
from .oracle import Finding, FindingKind
from .readonly import ReadOnlyCandidate
from .semantics import CrudAnnotation, CrudSemantics
from .spec_model import FieldPath

SCHEMA_VERSION = "massgate-report/1"


@dataclass
class Metrics:
    crud_correctness: float | None = None
    clustering_correctness: float | None = None
    resourceid_correctness: float | None = None
    tp: int | None = None
    fp: int | None = None
    fn: int | None = None
    precision: float | None = None
    recall: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: Mapping) -> "Metrics":
        return cls(**{k: d.get(k) for k in cls.__dataclass_fields__})


@dataclass
class ScanReport:
    mode: str
    spec_title: str = ""
    operation_count: int = 0
    group_count: int = 0
    annotations: list[CrudAnnotation] = field(default_factory=list)
    clusters: dict[str, str] = field(default_factory=dict)
    candidates: list[ReadOnlyCandidate] = field(default_factory=list)
    sequences: list[dict] = field(default_factory=list)
    findings: list[Finding] | None = None
    metrics: Metrics | None = None
    timings_ms: dict[str, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    exchange_count: int = 0

    def count(self, kind: FindingKind) -> int:
        return sum(1 for f in self.findings or [] if f.kind is kind)

    @property
    def has_defects(self) -> bool:
        return any(f.kind.is_defect for f in self.findings or [])

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "mode": self.mode,
            "spec": {
                "title": self.spec_title,
                "operation_count": self.operation_count,
                "group_count": self.group_count,
            },
            "annotations": [a.to_dict() for a in self.annotations],
            "clusters": dict(self.clusters),
            "candidates": [c.to_dict() for c in self.candidates],
            "sequences": list(self.sequences),
            "exchange_count": self.exchange_count,
            "findings": None if self.findings is None else [f.to_dict() for f in self.findings],
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
            "timings_ms": dict(self.timings_ms),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScanReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')!r}")
        spec = d.get("spec", {})
        findings = d.get("findings")
        metrics = d.get("metrics")
        return cls(
            mode=d["mode"],
            spec_title=spec.get("title", ""),
            operation_count=spec.get("operation_count", 0),
            group_count=spec.get("group_count", 0),
            annotations=[CrudAnnotation.from_dict(a) for a in d.get("annotations", [])],
            clusters=dict(d.get("clusters", {})),
            candidates=[ReadOnlyCandidate.from_dict(c) for c in d.get("candidates", [])],
            sequences=list(d.get("sequences", [])),
            findings=None if findings is None else [Finding.from_dict(f) for f in findings],
            metrics=None if metrics is None else Metrics.from_dict(metrics),
            timings_ms=dict(d.get("timings_ms", {})),
            warnings=list(d.get("warnings", [])),
            exchange_count=d.get("exchange_count", 0),
        )


def render(report: ScanReport, fmt: str = "json") -> bytes:
    if fmt == "json":
        return (json.dumps(report.to_dict(), indent=2, sort_keys=False) + "\n").encode()
    if fmt == "text":
        return render_text(report).encode()
    raise ValueError(f"unknown format {fmt!r}")


def _pct(x: float | None) -> str:
    return "n/a" if x is None else f"{100.0 * x:.1f}%"


def render_text(report: ScanReport) -> str:
    out = io.StringIO()
    w = out.write
    w(f"massgate {report.mode}: {report.spec_title or '(untitled)'}\n")
    w(f"  operations        {report.operation_count}\n")
    w(f"  resource groups   {report.group_count}\n")
    w(f"  read-only fields  {len(report.candidates)}\n")
    if report.findings is not None:
        w(f"  sequences         {len(report.sequences)}\n")
        w(f"  requests          {report.exchange_count}\n")
        for kind in FindingKind:
            w(f"  {kind.value:<17} {report.count(kind)}\n")
    if report.metrics is not None:
        m = report.metrics
        w("metrics\n")
        w(f"  crud correctness        {_pct(m.crud_correctness)}\n")
        w(f"  clustering correctness  {_pct(m.clustering_correctness)}\n")
        w(f"  resource-id correctness {_pct(m.resourceid_correctness)}\n")
        if m.tp is not None:
            w(f"  TP={m.tp} FP={m.fp} FN={m.fn}  Pr={_pct(m.precision)} Re={_pct(m.recall)}\n")
    if report.timings_ms:
        w("timings (ms)\n")
        for phase, ms in report.timings_ms.items():
            w(f"  {phase:<12} {ms:.1f}\n")
    if report.findings:
        w("findings\n")
        for f in report.findings:
            vals = ",".join(json.dumps(v) for v in f.injected_values)
            w(f"  {f.kind.value:<17} {f.resource_type}.{f.field_path} via {f.operation_id} "
              f"[{f.template}] values={vals or '-'} evidence={f.evidence} {f.note}\n")
    return out.getvalue()


def load_report(path: str | Path) -> ScanReport:
    with open(path, encoding="utf-8") as fh:
        return ScanReport.from_dict(json.load(fh))


# --------------------------------------------------------------- truth


@dataclass(frozen=True)
class TruthOp:
    crud: CrudSemantics
    resource: str
    id_input: str | None
    id_output: str | None


@dataclass
class GroundTruth:
    operations: dict[str, TruthOp]
    vulnerabilities: set[tuple[str, str]] | None


def _norm_path(text: str | None) -> str | None:
    if text is None:
        return None
    return str(FieldPath.parse(text).strip_wrappers())


def parse_truth(doc: Any) -> GroundTruth:
    if not isinstance(doc, dict) or not isinstance(doc.get("operations"), dict):
        raise TruthSchemaError("truth file needs an 'operations' mapping")
    ops = {}
    for op_id, entry in doc["operations"].items():
        if not isinstance(entry, dict) or "crud" not in entry:
            raise TruthSchemaError(f"{op_id}: needs a 'crud' key")
        try:
            crud = CrudSemantics.from_label(str(entry["crud"]))
        except Exception as exc:
            raise TruthSchemaError(f"{op_id}: bad crud value {entry['crud']!r}") from exc
        resource = entry.get("resource") or ""
        if crud is not CrudSemantics.NONE and not resource:
            raise TruthSchemaError(f"{op_id}: 'resource' is required for CRUD operations")
        unknown = set(entry) - {"crud", "resource", "id_input", "id_output"}
        if unknown:
            raise TruthSchemaError(f"{op_id}: unknown keys {sorted(unknown)}")
        try:
            ops[str(op_id)] = TruthOp(crud, str(resource), _norm_path(entry.get("id_input")),
                                      _norm_path(entry.get("id_output")))
        except ValueError as exc:
            raise TruthSchemaError(f"{op_id}: {exc}") from exc
    vulns = None
    if "vulnerabilities" in doc:
        raw = doc["vulnerabilities"] or []
        if not isinstance(raw, list):
            raise TruthSchemaError("'vulnerabilities' must be a list")
        vulns = set()
        for v in raw:
            if not isinstance(v, dict) or not {"operation", "field"} <= set(v):
                raise TruthSchemaError(f"bad vulnerability entry {v!r}")
            vulns.add((str(v["operation"]), str(v["field"])))
    return GroundTruth(ops, vulns)


def load_truth(path: str | Path) -> GroundTruth:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise TruthSchemaError(f"{path}: {exc}") from exc
    return parse_truth(doc)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def clustering_agreement(clusters: Mapping[str, str], truth_resource: Mapping[str, str]) -> float | None:
    """Share of operations placed in the right cluster.

    A resource's home cluster is the one holding most of its operations; a
    cluster's majority resource is the one most of its members belong to
    (ties alphabetical in both cases). An operation is placed right when its
    cluster is its resource's home and that cluster's majority is its
    resource, so both stray singletons and merged resources count as errors.
    Operations without a cluster are misplaced.
    """
    members: dict[str, list[str]] = {}
    homes: dict[str, Counter] = {}
    for op_id, res in truth_resource.items():
        key = clusters.get(op_id)
        if key is None:
            continue
        members.setdefault(key, []).append(op_id)
        homes.setdefault(res, Counter())[key] += 1
    majority = {}
    for key, ops in members.items():
        counts = Counter(truth_resource[o] for o in ops)
        majority[key] = min(counts, key=lambda r: (-counts[r], r))
    home = {res: min(c, key=lambda k: (-c[k], k)) for res, c in homes.items()}
    correct = sum(
        1
        for op_id, res in truth_resource.items()
        if op_id in clusters and home.get(res) == clusters[op_id] and majority[clusters[op_id]] == res
    )
    return _ratio(correct, len(truth_resource))


def score_against_ground_truth(report: ScanReport, truth: GroundTruth) -> Metrics:
    anns = {a.operation_id: a for a in report.annotations}
    crud_ops = {op_id: t for op_id, t in truth.operations.items() if t.crud is not CrudSemantics.NONE}

    crud_ok = sum(1 for op_id, t in crud_ops.items() if op_id in anns and anns[op_id].semantics is t.crud)

    # the resource-type label is the grouping the tool acts on
    grouping = {a.operation_id: a.resource_type for a in report.annotations if a.resource_type}
    clustering = clustering_agreement(grouping, {op_id: t.resource for op_id, t in crud_ops.items()})

    id_total = id_ok = 0
    for op_id, t in crud_ops.items():
        ann = anns.get(op_id)
        for want, got in ((t.id_input, ann and ann.resource_id_input), (t.id_output, ann and ann.resource_id_output)):
            if want is None:
                continue
            id_total += 1
            if got is not None and str(got.strip_wrappers()) == want:
                id_ok += 1

    m = Metrics(
        crud_correctness=_ratio(crud_ok, len(crud_ops)),
        clustering_correctness=clustering,
        resourceid_correctness=_ratio(id_ok, id_total),
    )
    if report.findings is not None and truth.vulnerabilities is not None:
        found = {(f.operation_id, f.field_name) for f in report.findings if f.kind is FindingKind.MASS_ASSIGNMENT}
        m.tp = len(found & truth.vulnerabilities)
        m.fp = len(found - truth.vulnerabilities)
        m.fn = len(truth.vulnerabilities - found)
        m.precision = _ratio(m.tp, m.tp + m.fp)
        m.recall = _ratio(m.tp, m.tp + m.fn)
    return m


def exit_code(report: ScanReport) -> int:
    return 2 if report.has_defects else 0
