"""Decide, from executed sequences, whether an injected field was bound.

The same ``evaluate`` function serves live scans and log replays, so a
replayed log yields exactly the findings of the scan that produced it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable

from .errors import FieldMissingInResponse, InstantiationFailed
from .executor import HttpExchange
from .jsonvalues import extract, has, same_id, values_equal
from .readonly import ReadOnlyCandidate
from .testgen import TestSequence, resource_of

DEFAULT_COINCIDENCE = "possible default-value coincidence"


class FindingKind(str, Enum):
    MASS_ASSIGNMENT = "MassAssignment"
    MALFORMED_ACCEPTED = "MalformedAccepted"
    SERVER_ERROR = "ServerError"
    CLEAN = "Clean"
    NOT_TESTABLE = "NotTestable"

    @property
    def is_defect(self) -> bool:
        return self in (FindingKind.MASS_ASSIGNMENT, FindingKind.MALFORMED_ACCEPTED, FindingKind.SERVER_ERROR)


@dataclass
class Finding:
    kind: FindingKind
    resource_type: str
    field_path: str
    operation_id: str
    template: str = ""
    injected_values: list = field(default_factory=list)
    evidence: list[int] = field(default_factory=list)
    note: str = ""

    @property
    def field_name(self) -> str:
        return self.field_path.rsplit(".", 1)[-1]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "resource_type": self.resource_type,
            "field_path": self.field_path,
            "operation_id": self.operation_id,
            "template": self.template,
            "injected_values": list(self.injected_values),
            "evidence": list(self.evidence),
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Finding":
        return cls(
            FindingKind(d["kind"]),
            d["resource_type"],
            d["field_path"],
            d["operation_id"],
            d.get("template", ""),
            list(d.get("injected_values", [])),
            list(d.get("evidence", [])),
            d.get("note", ""),
        )


@dataclass(frozen=True)
class TestCase:
    """One (candidate, template) pair scheduled for execution."""

    __test__ = False

    index: int
    template: str
    resource_type: str
    candidate: ReadOnlyCandidate
    operation_id: str
    values: tuple[Any, Any] | None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "template": self.template,
            "resource_type": self.resource_type,
            "candidate": self.candidate.to_dict(),
            "operation_id": self.operation_id,
            "values": None if self.values is None else list(self.values),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TestCase":
        vals = d.get("values")
        return cls(
            d["index"],
            d["template"],
            d["resource_type"],
            ReadOnlyCandidate.from_dict(d["candidate"]),
            d["operation_id"],
            None if vals is None else (vals[0], vals[1]),
        )


# ------------------------------------------------------------ primitive checks


def check_same_resource(seq: TestSequence) -> bool:
    """Every id-carrying request after the create targets the created resource."""
    rid = seq.resource_id_value
    if rid is None:
        return False
    for req in seq.requests:
        if req.step_role in ("create", "rm_before", "rm_after"):
            continue
        value = req.id_value()
        if value is not None and not same_id(value, rid):
            return False
    verify = seq.exchanges[seq.verify_index]
    return resource_of(verify, rid) is not None


def observed_value(seq: TestSequence) -> Any:
    """Value of the candidate field in the verifying read."""
    verify = seq.exchanges[seq.verify_index]
    resource = resource_of(verify, seq.resource_id_value)
    path = seq.candidate.field_path.strip_wrappers()
    if resource is None or not has(resource, path):
        raise FieldMissingInResponse(f"{path} absent from {verify.request.operation_id} response")
    return extract(resource, path)


def check_overwrite(seq: TestSequence) -> bool:
    return values_equal(observed_value(seq), seq.injection_value)


def detect_side_defects(
    exchanges: Iterable[HttpExchange],
    *,
    case: TestCase,
    overwritten: bool | None,
    verify_index: int | None = None,
) -> list[Finding]:
    """5xx responses anywhere, and 2xx injections that left the field untouched.

    ``overwritten`` is None when the run never reached its verifying read; no
    MalformedAccepted can be claimed then.
    """
    out: list[Finding] = []
    seen: set[tuple[str, FindingKind]] = set()
    path = str(case.candidate.field_path.strip_wrappers())
    for ex in exchanges:
        req = ex.request
        if ex.status_class == "5xx":
            key = (req.operation_id, FindingKind.SERVER_ERROR)
            if key not in seen:
                seen.add(key)
                out.append(
                    Finding(FindingKind.SERVER_ERROR, case.resource_type, path, req.operation_id,
                            case.template, [], [ex.index], f"HTTP {ex.status}")
                )
        elif ex.ok and req.injected_field is not None and overwritten is False:
            key = (req.operation_id, FindingKind.MALFORMED_ACCEPTED)
            if key not in seen:
                seen.add(key)
                evidence = [ex.index] + ([verify_index] if verify_index is not None else [])
                out.append(
                    Finding(FindingKind.MALFORMED_ACCEPTED, case.resource_type, path, req.operation_id,
                            case.template, [req.injected_field[1]], evidence,
                            "undocumented field accepted and ignored")
                )
    return out


def _pair(seq: TestSequence) -> list[int]:
    return [seq.exchanges[seq.injected_index].index, seq.exchanges[seq.verify_index].index]


def confirm_with_second_value(
    first: TestSequence, regenerate_and_run: Callable[[], TestSequence], case: TestCase
) -> Finding:
    """Repeat with the other injection value; both must stick for a positive."""
    path = str(case.candidate.field_path.strip_wrappers())
    op_id = first.requests[first.injected_index].operation_id
    v1, v2 = case.values if case.values is not None else (first.injection_value, first.second_injection_value)
    base = dict(resource_type=case.resource_type, field_path=path, operation_id=op_id, template=case.template)
    try:
        second = regenerate_and_run()
    except InstantiationFailed as exc:
        return Finding(FindingKind.NOT_TESTABLE, injected_values=[v1, v2], evidence=[],
                       note=f"second run failed: {exc}", **base)
    if not check_same_resource(second):
        return Finding(FindingKind.NOT_TESTABLE, injected_values=[v1, v2], evidence=[],
                       note="second run: resource-id mismatch", **base)
    try:
        ow2 = check_overwrite(second)
    except FieldMissingInResponse as exc:
        return Finding(FindingKind.NOT_TESTABLE, injected_values=[v1, v2], evidence=[],
                       note=f"second run: {exc}", **base)
    evidence = _pair(first) + _pair(second)
    if ow2:
        return Finding(FindingKind.MASS_ASSIGNMENT, injected_values=[v1, v2], evidence=evidence,
                       note="injected value persisted in both runs", **base)
    return Finding(FindingKind.CLEAN, injected_values=[v1, v2], evidence=evidence,
                   note=DEFAULT_COINCIDENCE, **base)


# ------------------------------------------------------------------ verdict

Rerun = Callable[[], TestSequence]


def evaluate(case: TestCase, first: TestSequence | InstantiationFailed | None, rerun: Rerun) -> list[Finding]:
    """Findings for one test case: a primary verdict followed by side defects."""
    path = str(case.candidate.field_path.strip_wrappers())

    def not_testable(note: str, values: list) -> Finding:
        return Finding(FindingKind.NOT_TESTABLE, case.resource_type, path, case.operation_id,
                       case.template, values, [], note)

    if case.values is None or first is None:
        return [not_testable("no two distinct injection values", [])]
    v1 = case.values[0]
    if isinstance(first, InstantiationFailed):
        return [not_testable(f"instantiation failed: {first}", [v1])] + detect_side_defects(
            first.exchanges, case=case, overwritten=None
        )

    if not check_same_resource(first):
        return [not_testable("resource-id mismatch", [v1])] + detect_side_defects(
            first.all_exchanges, case=case, overwritten=None
        )
    try:
        ow1 = check_overwrite(first)
    except FieldMissingInResponse as exc:
        return [not_testable(str(exc), [v1])] + detect_side_defects(first.all_exchanges, case=case, overwritten=None)

    verify_ix = first.exchanges[first.verify_index].index
    side = detect_side_defects(first.all_exchanges, case=case, overwritten=ow1, verify_index=verify_ix)
    op_id = first.requests[first.injected_index].operation_id
    if not ow1:
        clean = Finding(FindingKind.CLEAN, case.resource_type, path, op_id, case.template,
                        [v1], _pair(first), "injected value not persisted")
        return [clean] + side

    second_run: list[TestSequence | InstantiationFailed] = []

    def tracked() -> TestSequence:
        try:
            seq = rerun()
        except InstantiationFailed as exc:
            second_run.append(exc)
            raise
        second_run.append(seq)
        return seq

    primary = confirm_with_second_value(first, tracked, case)
    for res in second_run:
        if isinstance(res, InstantiationFailed):
            side += detect_side_defects(res.exchanges, case=case, overwritten=None)
        else:
            side += detect_side_defects(res.all_exchanges, case=case, overwritten=None)
    return [primary] + side


def dedupe_side_defects(findings: Iterable[Finding]) -> list[Finding]:
    """Keep the first MalformedAccepted/ServerError per (operation, kind)."""
    out = []
    seen: set[tuple[str, FindingKind]] = set()
    for f in findings:
        if f.kind in (FindingKind.MALFORMED_ACCEPTED, FindingKind.SERVER_ERROR):
            key = (f.operation_id, f.kind)
            if key in seen:
                continue
            seen.add(key)
        out.append(f)
    return out
