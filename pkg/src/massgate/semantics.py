"""CRUD semantics, resource-id detection and the ``x-crud*`` annotation syntax."""

from __future__ import annotations

import copy
import enum
import json
from dataclasses import dataclass
from typing import Iterable

from .errors import InvalidAnnotationValue, UnknownOperation
from .spec_model import ApiSpec, FieldPath, OperationDesc, dump_document, flatten_fields

SEMANTICS_KEY = "x-crudOperationSemantics"
RESOURCE_TYPE_KEY = "x-crudResourceType"
RESOURCE_ID_KEY = "x-crudResourceIdentifier"
CRUD_KEYS = (SEMANTICS_KEY, RESOURCE_TYPE_KEY, RESOURCE_ID_KEY)


class CrudSemantics(str, enum.Enum):
    CREATE = "create"
    READ = "read"
    READ_MULTI = "read-multi"
    UPDATE = "update"
    DELETE = "delete"
    NONE = "none"

    @property
    def short(self) -> str:
        return _SHORT[self]

    @classmethod
    def from_label(cls, value: str) -> "CrudSemantics":
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise InvalidAnnotationValue(f"unknown CRUD semantics {value!r}") from None


_SHORT = {
    CrudSemantics.CREATE: "C",
    CrudSemantics.READ: "R",
    CrudSemantics.READ_MULTI: "RM",
    CrudSemantics.UPDATE: "U",
    CrudSemantics.DELETE: "D",
    CrudSemantics.NONE: "-",
}

READS = (CrudSemantics.READ, CrudSemantics.READ_MULTI)
WRITES = (CrudSemantics.CREATE, CrudSemantics.UPDATE)


@dataclass(frozen=True)
class CrudAnnotation:
    operation_id: str
    semantics: CrudSemantics
    resource_type: str = ""
    resource_id_input: FieldPath | None = None
    resource_id_output: FieldPath | None = None

    def __post_init__(self):
        if self.semantics is CrudSemantics.NONE and self.resource_type:
            raise ValueError("operations without CRUD semantics carry no resource type")

    @property
    def resource_id(self) -> FieldPath | None:
        """The id threaded through sequences: output side, else input side."""
        return self.resource_id_output or self.resource_id_input

    def to_dict(self) -> dict:
        return {
            "operation_id": self.operation_id,
            "semantics": self.semantics.value,
            "resource_type": self.resource_type,
            "resource_id_input": _path_str(self.resource_id_input),
            "resource_id_output": _path_str(self.resource_id_output),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CrudAnnotation":
        return cls(
            data["operation_id"],
            CrudSemantics(data["semantics"]),
            data.get("resource_type", ""),
            _path_or_none(data.get("resource_id_input")),
            _path_or_none(data.get("resource_id_output")),
        )


def _path_str(path: FieldPath | None) -> str | None:
    return None if path is None else str(path)


def _path_or_none(text: str | None) -> FieldPath | None:
    return None if text is None else FieldPath.parse(text)


_METHOD_SEMANTICS = {
    "POST": CrudSemantics.CREATE,
    "PUT": CrudSemantics.UPDATE,
    "PATCH": CrudSemantics.UPDATE,
    "DELETE": CrudSemantics.DELETE,
}


def infer_crud(op: OperationDesc) -> CrudSemantics:
    """CRUD semantics from the HTTP method and, for GET, the 2xx schema shape."""
    if op.method == "GET":
        schema = op.success_schema
        if schema is None:
            return CrudSemantics.NONE
        return CrudSemantics.READ_MULTI if schema.kind == "array" else CrudSemantics.READ
    return _METHOD_SEMANTICS.get(op.method, CrudSemantics.NONE)


def _id_rank(path: FieldPath) -> tuple[int, int] | None:
    name = path.name.lower()
    if name.endswith("id"):
        return (path.depth, 0)
    if name.endswith("name"):
        return (path.depth, 1)
    return None


def detect_resource_id(op: OperationDesc, side: str) -> FieldPath | None:
    """Pick the resource-id field among the input or output fields of ``op``.

    Candidates end in ``id`` or ``name`` (case-insensitive). On the input
    side only path/query parameters and body fields are considered. The least nested
    wins, then an ``id`` suffix over ``name``, then declaration order. Array
    markers do not count toward nesting.
    """
    if side == "input":
        # headers and cookies carry request metadata, not resource ids
        fields = [(FieldPath((p.name,)), p.schema) for p in op.parameters if p.location in ("path", "query")]
        if op.request_body_schema is not None:
            fields.extend(flatten_fields(op.request_body_schema))
    elif side == "output":
        fields = op.output_fields()
    else:
        raise ValueError(f"side must be 'input' or 'output', not {side!r}")
    best: tuple[tuple[int, int], int, FieldPath] | None = None
    for index, (path, _) in enumerate(fields):
        rank = _id_rank(path)
        if rank is None:
            continue
        key = (rank, index, path)
        if best is None or key[:2] < best[:2]:
            best = key
    return best[2] if best else None


def infer_annotation(op: OperationDesc, resource_type: str = "") -> CrudAnnotation:
    semantics = infer_crud(op)
    if semantics is CrudSemantics.NONE:
        return CrudAnnotation(op.operation_id, semantics)
    return CrudAnnotation(
        op.operation_id,
        semantics,
        resource_type,
        detect_resource_id(op, "input"),
        detect_resource_id(op, "output"),
    )


# -------------------------------------------------------------- annotation


def _identifier_value(ann: CrudAnnotation):
    inp, out = _path_str(ann.resource_id_input), _path_str(ann.resource_id_output)
    if inp is not None and inp == out:
        return inp
    value = {}
    if inp is not None:
        value["input"] = inp
    if out is not None:
        value["output"] = out
    return value or None


def _op_node(doc: dict, op: OperationDesc) -> dict:
    try:
        return doc["paths"][op.path][op.method.lower()]
    except (KeyError, TypeError):
        raise UnknownOperation(f"{op.operation_id} not present in the document") from None


def annotate_spec(spec: ApiSpec, annotations: Iterable[CrudAnnotation]) -> bytes:
    """Write annotations into a copy of the source document.

    Output keeps the input format. Re-applying the same annotations yields the
    same bytes.
    """
    doc = copy.deepcopy(spec.raw)
    by_id = {op.operation_id: op for op in spec.operations}
    for ann in annotations:
        op = by_id.get(ann.operation_id)
        if op is None:
            raise UnknownOperation(ann.operation_id)
        node = _op_node(doc, op)
        for key in CRUD_KEYS:
            node.pop(key, None)
        node[SEMANTICS_KEY] = ann.semantics.value
        node[RESOURCE_TYPE_KEY] = ann.resource_type
        ident = _identifier_value(ann)
        if ident is not None:
            node[RESOURCE_ID_KEY] = ident
    return dump_document(doc, spec.source_format)


def _parse_identifier(value, op_id: str) -> tuple[FieldPath | None, FieldPath | None]:
    if value is None:
        return None, None
    if isinstance(value, str):
        path = FieldPath.parse(value)
        return path, path
    if isinstance(value, dict) and set(value) <= {"input", "output"}:
        return _path_or_none(value.get("input")), _path_or_none(value.get("output"))
    raise InvalidAnnotationValue(f"{op_id}: malformed {RESOURCE_ID_KEY} {value!r}")


def read_annotations(spec: ApiSpec) -> list[CrudAnnotation]:
    """Manual annotations present in the document, in operation order.

    An operation carrying any ``x-crud*`` key is returned; a missing semantics
    key falls back to inference and a missing resource type is left empty.
    """
    out = []
    for op in spec.operations:
        ext = op.extensions
        if not any(k in ext for k in CRUD_KEYS):
            continue
        if SEMANTICS_KEY in ext:
            semantics = CrudSemantics.from_label(ext[SEMANTICS_KEY])
        else:
            semantics = infer_crud(op)
        rtype = ext.get(RESOURCE_TYPE_KEY) or ""
        if not isinstance(rtype, str):
            raise InvalidAnnotationValue(f"{op.operation_id}: resource type must be a string")
        if semantics is CrudSemantics.NONE:
            rtype = ""
        inp, outp = _parse_identifier(ext.get(RESOURCE_ID_KEY), op.operation_id)
        out.append(CrudAnnotation(op.operation_id, semantics, rtype, inp, outp))
    return out


def annotations_json(annotations: Iterable[CrudAnnotation]) -> str:
    return json.dumps([a.to_dict() for a in annotations], indent=2)
