"""Candidate read-only fields per resource group."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .semantics import READS, WRITES, CrudAnnotation, CrudSemantics
from .spec_model import FieldPath, OperationDesc, SchemaNode, schema_from_dict, schema_to_dict
from .stemmer import stem


@dataclass
class ResourceGroup:
    resource_type: str
    operations: list[tuple[OperationDesc, CrudAnnotation]] = field(default_factory=list)

    def __post_init__(self):
        for _, ann in self.operations:
            if ann.resource_type != self.resource_type:
                raise ValueError(f"{ann.operation_id} belongs to {ann.resource_type!r}")

    def with_semantics(self, *semantics: CrudSemantics) -> list[tuple[OperationDesc, CrudAnnotation]]:
        return [(op, ann) for op, ann in self.operations if ann.semantics in semantics]

    @property
    def read_fields(self) -> set[str]:
        return {
            stem(path.name)
            for op, _ in self.with_semantics(*READS)
            for path, _ in op.output_fields()
            if path.name
        }

    @property
    def write_fields(self) -> set[str]:
        return {
            stem(path.name)
            for op, _ in self.with_semantics(*WRITES)
            for path, _ in op.input_fields()
            if path.name
        }

    @property
    def id_fields(self) -> set[str]:
        out = set()
        for _, ann in self.operations:
            for p in (ann.resource_id_input, ann.resource_id_output):
                if p is not None and p.name:
                    out.add(stem(p.name))
        return out

    def annotation(self, operation_id: str) -> CrudAnnotation:
        for _, ann in self.operations:
            if ann.operation_id == operation_id:
                return ann
        raise KeyError(operation_id)


@dataclass(frozen=True)
class ReadOnlyCandidate:
    resource_type: str
    field_name: str
    field_path: FieldPath
    leaf_schema: SchemaNode
    witness_read_op: str

    def to_dict(self) -> dict:
        return {
            "resource_type": self.resource_type,
            "field_name": self.field_name,
            "field_path": str(self.field_path),
            "schema": schema_to_dict(self.leaf_schema),
            "witness_read_op": self.witness_read_op,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReadOnlyCandidate":
        return cls(
            data["resource_type"],
            data["field_name"],
            FieldPath.parse(data["field_path"]),
            schema_from_dict(data["schema"]),
            data["witness_read_op"],
        )


def build_groups(
    ops: Iterable[OperationDesc], annotations: Mapping[str, CrudAnnotation]
) -> list[ResourceGroup]:
    """Group annotated CRUD operations by resource type, in first-seen order."""
    groups: dict[str, ResourceGroup] = {}
    for op in ops:
        ann = annotations.get(op.operation_id)
        if ann is None or ann.semantics is CrudSemantics.NONE or not ann.resource_type:
            continue
        groups.setdefault(ann.resource_type, ResourceGroup(ann.resource_type)).operations.append((op, ann))
    return list(groups.values())


def _priority(candidate: ReadOnlyCandidate) -> int:
    leaf = candidate.leaf_schema
    return 0 if leaf.kind == "boolean" or leaf.enum_values else 1


def detect_readonly(groups: Iterable[ResourceGroup]) -> list[ReadOnlyCandidate]:
    """Read-output leaves whose stem is never a create/update input of the group.

    Resource-id fields are left out; boolean and enum candidates sort first.
    """
    found: list[ReadOnlyCandidate] = []
    for group in groups:
        writable = group.write_fields
        ids = group.id_fields
        seen: set[str] = set()
        for op, _ in group.with_semantics(*READS):
            for path, leaf in op.output_fields():
                if not path.name:
                    continue
                s = stem(path.name)
                if s in writable or s in ids or s in seen:
                    continue
                seen.add(s)
                found.append(ReadOnlyCandidate(group.resource_type, path.name, path, leaf, op.operation_id))
    return sorted(found, key=_priority)
