"""Normalized in-memory model of OpenAPI 3.x documents.

Parsing inlines every internal ``$ref`` so downstream analysis never has to
chase references. The raw document is kept alongside the model because the
annotator writes extensions back into it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Iterator, Mapping

import yaml

from .errors import ParseError, RecursionLimit, UnresolvedRef, UnsupportedVersion

log = logging.getLogger(__name__)

HTTP_METHODS = ("get", "post", "put", "patch", "delete", "head", "options", "trace")
SCALAR_KINDS = frozenset({"string", "integer", "number", "boolean"})
DEFAULT_MAX_DEPTH = 32
ARRAY_SEGMENT = "[]"


class _Unset:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNSET"

    def __bool__(self) -> bool:
        return False


UNSET = _Unset()


@dataclass(frozen=True)
class FieldPath:
    """Address of a (possibly nested) field; ``[]`` marks array traversal."""

    segments: tuple[str, ...] = ()

    def __post_init__(self):
        for seg in self.segments:
            if not seg or "/" in seg:
                raise ValueError(f"invalid field path segment {seg!r}")

    @classmethod
    def parse(cls, text: str) -> "FieldPath":
        if not text:
            return cls(())
        return cls(tuple(text.split(".")))

    def __str__(self) -> str:
        return ".".join(self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def name(self) -> str:
        """Leaf property name, ignoring array markers ('' for the root)."""
        for seg in reversed(self.segments):
            if seg != ARRAY_SEGMENT:
                return seg
        return ""

    @property
    def depth(self) -> int:
        return sum(1 for s in self.segments if s != ARRAY_SEGMENT)

    def strip_wrappers(self) -> "FieldPath":
        """Drop leading array markers, e.g. the list wrapper of a read-multi."""
        segs = self.segments
        while segs and segs[0] == ARRAY_SEGMENT:
            segs = segs[1:]
        return FieldPath(segs)

    def child(self, name: str) -> "FieldPath":
        return FieldPath(self.segments + (name,))


@dataclass(frozen=True)
class SchemaNode:
    kind: str
    properties: dict[str, "SchemaNode"] = field(default_factory=dict)
    items: "SchemaNode | None" = None
    format: str | None = None
    enum_values: tuple | None = None
    default_value: Any = UNSET
    example_values: tuple = ()
    required: bool = False
    minimum: float | None = None
    maximum: float | None = None
    truncated: bool = False

    def __post_init__(self):
        if self.kind == "array" and self.items is None:
            raise ValueError("array schema without items")
        if self.enum_values is not None and not self.enum_values:
            raise ValueError("enum must be non-empty")

    @property
    def has_default(self) -> bool:
        return self.default_value is not UNSET

    @property
    def is_scalar(self) -> bool:
        return self.kind in SCALAR_KINDS


@dataclass(frozen=True)
class ParamDesc:
    name: str
    location: str  # path | query | header | cookie | body
    schema: SchemaNode
    required: bool = False
    field_path: FieldPath = FieldPath()


@dataclass(frozen=True)
class OperationDesc:
    operation_id: str
    path: str
    method: str
    parameters: tuple[ParamDesc, ...] = ()
    request_body_schema: SchemaNode | None = None
    body_required: bool = False
    response_schemas: dict[str, SchemaNode] = field(default_factory=dict)
    extensions: dict[str, Any] = field(default_factory=dict)

    @property
    def input_params(self) -> list[ParamDesc]:
        """Path/query/header parameters followed by flattened body leaves."""
        params = list(self.parameters)
        if self.request_body_schema is not None:
            for path, leaf in flatten_fields(self.request_body_schema):
                params.append(
                    ParamDesc(str(path) or "<body>", "body", leaf, leaf.required, path)
                )
        return params

    @property
    def success_status(self) -> str | None:
        codes = [c for c in self.response_schemas if _status_rank(c) is not None]
        if not codes:
            return None
        return min(codes, key=_status_rank)

    @property
    def success_schema(self) -> SchemaNode | None:
        status = self.success_status
        return self.response_schemas[status] if status else None

    def input_fields(self) -> list[tuple[FieldPath, SchemaNode]]:
        """Input leaves as field paths; non-body parameters are single-segment."""
        out = [(FieldPath((p.name,)), p.schema) for p in self.parameters]
        if self.request_body_schema is not None:
            out.extend(flatten_fields(self.request_body_schema))
        return out

    def output_fields(self) -> list[tuple[FieldPath, SchemaNode]]:
        schema = self.success_schema
        return flatten_fields(schema) if schema is not None else []

    def required_input_count(self) -> int:
        n = sum(1 for p in self.parameters if p.required)
        if self.request_body_schema is not None:
            n += sum(1 for _, leaf in flatten_fields(self.request_body_schema) if leaf.required)
        return n


def _status_rank(code: str) -> int | None:
    code = str(code).upper()
    if code.isdigit() and 200 <= int(code) < 300:
        return int(code)
    if code == "2XX":
        return 299
    return None


@dataclass(frozen=True)
class ApiSpec:
    base_url: str
    operations: tuple[OperationDesc, ...]
    components: dict[str, SchemaNode] = field(default_factory=dict)
    title: str = ""
    raw: dict = field(default_factory=dict, compare=False, repr=False)
    source_format: str = field(default="yaml", compare=False)
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def operation(self, operation_id: str) -> OperationDesc:
        for op in self.operations:
            if op.operation_id == operation_id:
                return op
        raise KeyError(operation_id)

    def __iter__(self) -> Iterator[OperationDesc]:
        return iter(self.operations)

    def __len__(self) -> int:
        return len(self.operations)


# ----------------------------------------------------------------- parsing


def _load_document(document: bytes | str, format_hint: str) -> tuple[dict, str]:
    if isinstance(document, bytes):
        try:
            text = document.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise ParseError(f"document is not valid UTF-8: {exc}") from exc
    else:
        text = document
    if format_hint not in ("json", "yaml", "auto"):
        raise ValueError(f"unknown format hint {format_hint!r}")
    fmt = format_hint
    if fmt == "auto":
        fmt = "json" if text.lstrip().startswith(("{", "[")) else "yaml"
    try:
        data = json.loads(text) if fmt == "json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ParseError(f"malformed {fmt.upper()} document: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError("OpenAPI document must be a mapping at top level")
    return data, fmt


class _Resolver:
    def __init__(self, root: dict, max_depth: int):
        self.root = root
        self.max_depth = max_depth
        self.warnings: list[str] = []

    def warn(self, msg: str) -> None:
        if msg not in self.warnings:
            log.warning(msg)
            self.warnings.append(msg)

    def lookup(self, ref: str) -> Any:
        if not isinstance(ref, str) or not ref.startswith("#"):
            raise UnresolvedRef(f"only internal references are supported: {ref!r}")
        node: Any = self.root
        for part in ref[1:].split("/")[1:] if ref.startswith("#/") else []:
            part = part.replace("~1", "/").replace("~0", "~")
            if isinstance(node, dict) and part in node:
                node = node[part]
            elif isinstance(node, list) and part.isdigit() and int(part) < len(node):
                node = node[int(part)]
            else:
                raise UnresolvedRef(f"dangling reference {ref!r}")
        if ref in ("#", "#/"):
            return self.root
        return node

    def deref(self, node: Any) -> Any:
        """Follow a chain of ``$ref`` on a non-schema object."""
        seen = set()
        while isinstance(node, dict) and "$ref" in node:
            ref = node["$ref"]
            if ref in seen:
                raise UnresolvedRef(f"reference cycle through {ref!r}")
            seen.add(ref)
            node = self.lookup(ref)
        return node

    def schema(self, raw: Any, depth: int = 0, stack: tuple[str, ...] = ()) -> SchemaNode:
        if not isinstance(raw, dict):
            raise ParseError(f"schema must be a mapping, got {type(raw).__name__}")
        if "$ref" in raw:
            ref = raw["$ref"]
            target = self.lookup(ref)
            if ref in stack:
                self.warn(f"cyclic schema through {ref} truncated")
                return SchemaNode("object", truncated=True)
            return self.schema(target, depth, stack + (ref,))
        if depth > self.max_depth:
            self.warn(f"schema nesting deeper than {self.max_depth} truncated")
            return SchemaNode("object", truncated=True)

        if "allOf" in raw:
            parts = [self.schema(p, depth, stack) for p in raw["allOf"]]
            rest = {k: v for k, v in raw.items() if k != "allOf"}
            if rest.get("properties") or rest.get("type"):
                parts.append(self.schema(rest, depth, stack))
            return _merge_all_of(parts)
        for key in ("oneOf", "anyOf"):
            if key in raw and raw[key]:
                self.warn(f"{key} composite schema reduced to its first branch")
                rest = {k: v for k, v in raw.items() if k != key}
                first = self.deref_schema(raw[key][0], stack)
                merged = {**rest, **first}
                return self.schema(merged, depth, stack)

        kind = raw.get("type")
        if isinstance(kind, list):
            kind = next((k for k in kind if k != "null"), "string")
        if kind is None:
            if "properties" in raw:
                kind = "object"
            elif "items" in raw:
                kind = "array"
            else:
                kind = "string"
        if kind not in SCALAR_KINDS | {"object", "array"}:
            kind = "string"

        props: dict[str, SchemaNode] = {}
        items = None
        if kind == "object":
            required = set(raw.get("required") or [])
            for name, sub in (raw.get("properties") or {}).items():
                child = self.schema(sub, depth + 1, stack)
                props[str(name)] = _with_required(child, name in required)
        elif kind == "array":
            items = self.schema(raw.get("items") or {}, depth + 1, stack)

        enum = raw.get("enum")
        examples: tuple = ()
        if "example" in raw:
            examples = (raw["example"],)
        elif isinstance(raw.get("examples"), list):
            examples = tuple(raw["examples"])
        return SchemaNode(
            kind=kind,
            properties=props,
            items=items,
            format=raw.get("format"),
            enum_values=tuple(enum) if enum else None,
            default_value=raw["default"] if "default" in raw else UNSET,
            example_values=examples,
            minimum=raw.get("minimum"),
            maximum=raw.get("maximum"),
        )

    def deref_schema(self, raw: Any, stack: tuple[str, ...]) -> dict:
        while isinstance(raw, dict) and "$ref" in raw:
            if raw["$ref"] in stack:
                return {"type": "object"}
            raw = self.lookup(raw["$ref"])
        return raw if isinstance(raw, dict) else {}


def _with_required(node: SchemaNode, required: bool) -> SchemaNode:
    if node.required == required:
        return node
    return replace(node, required=required)


def _merge_all_of(parts: list[SchemaNode]) -> SchemaNode:
    objects = [p for p in parts if p.kind == "object"]
    if not objects:
        return parts[0]
    props: dict[str, SchemaNode] = {}
    for p in objects:
        for name, child in p.properties.items():
            if name in props and props[name].required and not child.required:
                child = _with_required(child, True)
            props[name] = child
    return SchemaNode("object", properties=props)


def _pick_content(content: Mapping | None) -> Any:
    if not content:
        return None
    if "application/json" in content:
        return content["application/json"]
    for ctype, media in content.items():
        if "json" in ctype:
            return media
    return next(iter(content.values()))


def _media_schema(res: _Resolver, media: Any) -> SchemaNode | None:
    if not isinstance(media, dict):
        return None
    raw = media.get("schema")
    if not raw:
        return None
    return res.schema(raw)


def _parse_parameter(res: _Resolver, raw: Any) -> ParamDesc:
    raw = res.deref(raw)
    if not isinstance(raw, dict) or "name" not in raw or "in" not in raw:
        raise ParseError(f"malformed parameter object: {raw!r}")
    if "schema" in raw:
        schema = res.schema(raw["schema"])
    elif "content" in raw:
        schema = _media_schema(res, _pick_content(raw["content"])) or SchemaNode("string")
    else:
        schema = SchemaNode("string")
    if "example" in raw and not schema.example_values:
        schema = replace(schema, example_values=(raw["example"],))
    location = raw["in"]
    required = bool(raw.get("required", location == "path"))
    return ParamDesc(str(raw["name"]), location, schema, required, FieldPath((str(raw["name"]),)))


def parse_spec(
    document: bytes | str, format_hint: str = "auto", max_depth: int = DEFAULT_MAX_DEPTH
) -> ApiSpec:
    """Parse an OpenAPI 3.x document (JSON or YAML) into an :class:`ApiSpec`."""
    data, fmt = _load_document(document, format_hint)
    version = data.get("openapi")
    if version is None:
        if "swagger" in data:
            raise UnsupportedVersion(f"Swagger {data['swagger']} is not supported; convert to OpenAPI 3.x")
        raise UnsupportedVersion("missing 'openapi' version field")
    if not str(version).startswith("3."):
        raise UnsupportedVersion(f"OpenAPI {version} is not supported (3.x only)")

    res = _Resolver(data, max_depth)
    servers = data.get("servers") or []
    base_url = ""
    if servers and isinstance(servers[0], dict):
        base_url = str(servers[0].get("url", ""))

    paths = data.get("paths") or {}
    if not isinstance(paths, dict):
        raise ParseError("'paths' must be a mapping")
    operations: list[OperationDesc] = []
    seen_ids: set[str] = set()
    for path, item in paths.items():
        path = str(path)
        if not path.startswith("/"):
            raise ParseError(f"path {path!r} does not begin with '/'")
        item = res.deref(item) or {}
        if not isinstance(item, dict):
            raise ParseError(f"path item for {path} must be a mapping")
        shared = [_parse_parameter(res, p) for p in item.get("parameters") or []]
        for method in HTTP_METHODS:
            if method not in item:
                continue
            node = item[method] or {}
            if not isinstance(node, dict):
                raise ParseError(f"operation {method.upper()} {path} must be a mapping")
            operations.append(_parse_operation(res, path, method, node, shared, seen_ids))

    components = {}
    for name, raw in ((data.get("components") or {}).get("schemas") or {}).items():
        components[str(name)] = res.schema(raw, 0, (f"#/components/schemas/{name}",))

    title = str((data.get("info") or {}).get("title", ""))
    return ApiSpec(
        base_url=base_url,
        operations=tuple(operations),
        components=components,
        title=title,
        raw=data,
        source_format=fmt,
        warnings=tuple(res.warnings),
    )


def _parse_operation(
    res: _Resolver, path: str, method: str, node: dict, shared: list[ParamDesc], seen_ids: set[str]
) -> OperationDesc:
    op_id = node.get("operationId") or f"{method.upper()} {path}"
    if op_id in seen_ids:
        raise ParseError(f"duplicate operationId {op_id!r}")
    seen_ids.add(op_id)

    params: dict[tuple[str, str], ParamDesc] = {(p.location, p.name): p for p in shared}
    for raw in node.get("parameters") or []:
        p = _parse_parameter(res, raw)
        params[(p.location, p.name)] = p

    body_schema = None
    body_required = False
    if "requestBody" in node:
        body = res.deref(node["requestBody"]) or {}
        body_required = bool(body.get("required", False))
        body_schema = _media_schema(res, _pick_content(body.get("content")))

    responses: dict[str, SchemaNode] = {}
    for code, resp in (node.get("responses") or {}).items():
        resp = res.deref(resp) or {}
        schema = _media_schema(res, _pick_content(resp.get("content")))
        if schema is not None:
            responses[str(code)] = schema

    extensions = {k: v for k, v in node.items() if isinstance(k, str) and k.startswith("x-")}
    return OperationDesc(
        operation_id=str(op_id),
        path=path,
        method=method.upper(),
        parameters=tuple(params.values()),
        request_body_schema=body_schema,
        body_required=body_required,
        response_schemas=responses,
        extensions=extensions,
    )


def schema_from_dict(raw: dict) -> SchemaNode:
    """Parse a standalone, reference-free schema mapping."""
    return _Resolver({}, DEFAULT_MAX_DEPTH).schema(raw)


def load_spec(path: str, format_hint: str = "auto") -> ApiSpec:
    with open(path, "rb") as fh:
        return parse_spec(fh.read(), format_hint)


# ------------------------------------------------------------- flattening


def flatten_fields(
    schema: SchemaNode, max_depth: int = DEFAULT_MAX_DEPTH
) -> list[tuple[FieldPath, SchemaNode]]:
    """Every scalar leaf reachable from ``schema``, depth-first in declaration order."""
    out: list[tuple[FieldPath, SchemaNode]] = []

    def walk(node: SchemaNode, prefix: tuple[str, ...]) -> None:
        if len(prefix) > max_depth:
            raise RecursionLimit(f"schema nesting exceeds {max_depth}")
        if node.kind == "object":
            for name, child in node.properties.items():
                walk(child, prefix + (name,))
        elif node.kind == "array":
            walk(node.items, prefix + (ARRAY_SEGMENT,))
        else:
            out.append((FieldPath(prefix), node))

    walk(schema, ())
    return out


# ----------------------------------------------------------- serializing


def schema_to_dict(node: SchemaNode) -> dict:
    out: dict[str, Any] = {"type": node.kind}
    if node.format is not None:
        out["format"] = node.format
    if node.kind == "object":
        out["properties"] = {k: schema_to_dict(v) for k, v in node.properties.items()}
        required = [k for k, v in node.properties.items() if v.required]
        if required:
            out["required"] = required
    if node.kind == "array":
        out["items"] = schema_to_dict(node.items)
    if node.enum_values is not None:
        out["enum"] = list(node.enum_values)
    if node.has_default:
        out["default"] = node.default_value
    if len(node.example_values) == 1:
        out["example"] = node.example_values[0]
    elif node.example_values:
        out["examples"] = list(node.example_values)
    if node.minimum is not None:
        out["minimum"] = node.minimum
    if node.maximum is not None:
        out["maximum"] = node.maximum
    return out


def to_document(spec: ApiSpec) -> dict:
    """Rebuild a self-contained OpenAPI document (all references inlined)."""
    paths: dict[str, dict] = {}
    for op in spec.operations:
        node: dict[str, Any] = {"operationId": op.operation_id}
        if op.parameters:
            node["parameters"] = [
                {"name": p.name, "in": p.location, "required": p.required, "schema": schema_to_dict(p.schema)}
                for p in op.parameters
            ]
        if op.request_body_schema is not None:
            node["requestBody"] = {
                "required": op.body_required,
                "content": {"application/json": {"schema": schema_to_dict(op.request_body_schema)}},
            }
        node["responses"] = {
            code: {"description": "", "content": {"application/json": {"schema": schema_to_dict(s)}}}
            for code, s in op.response_schemas.items()
        } or {"default": {"description": ""}}
        node.update(op.extensions)
        paths.setdefault(op.path, {})[op.method.lower()] = node
    doc: dict[str, Any] = {"openapi": "3.0.3", "info": {"title": spec.title, "version": "1"}}
    if spec.base_url:
        doc["servers"] = [{"url": spec.base_url}]
    doc["paths"] = paths
    if spec.components:
        doc["components"] = {"schemas": {k: schema_to_dict(v) for k, v in spec.components.items()}}
    return doc


def dump_document(doc: dict, fmt: str) -> bytes:
    if fmt == "json":
        return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True).encode("utf-8")
