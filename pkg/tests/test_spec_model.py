import json

import pytest
import yaml

from massgate.errors import ParseError, RecursionLimit, UnresolvedRef, UnsupportedVersion
from massgate.spec_model import (
    UNSET,
    FieldPath,
    SchemaNode,
    flatten_fields,
    load_spec,
    parse_spec,
    schema_from_dict,
    to_document,
)
from specdocs import USERS_API


def doc(paths=None, components=None, **extra):
    d = {"openapi": "3.0.3", "info": {"title": "t", "version": "1"}, "paths": paths or {}}
    if components:
        d["components"] = components
    d.update(extra)
    return json.dumps(d)


def ok(schema):
    return {"200": {"description": "ok", "content": {"application/json": {"schema": schema}}}}


class TestFieldPath:
    def test_parse_and_render(self):
        p = FieldPath.parse("[].admin")
        assert p.segments == ("[]", "admin")
        assert str(p) == "[].admin"
        assert p.name == "admin"
        assert p.depth == 1
        assert p.strip_wrappers() == FieldPath(("admin",))

    def test_child(self):
        assert str(FieldPath.parse("a").child("b")) == "a.b"

    @pytest.mark.parametrize("bad", ["a..b", "a/b", "."])
    def test_rejects_malformed(self, bad):
        with pytest.raises(ValueError):
            FieldPath.parse(bad)


class TestParse:
    def test_users_api_operations(self):
        spec = parse_spec(USERS_API)
        assert [op.operation_id for op in spec.operations] == ["retrieve_all_users", "register_new_user"]
        rm, create = spec.operations
        assert rm.method == "GET" and create.method == "POST"
        assert [str(p) for p, _ in rm.output_fields()] == ["[].admin", "[].email", "[].password", "[].username"]
        assert [str(p) for p, _ in create.input_fields()] == ["username", "password", "email"]
        assert spec.base_url == "http://localhost:5000"
        assert spec.source_format == "yaml"

    def test_json_detected(self):
        spec = parse_spec(doc({"/a": {"get": {"responses": ok({"type": "string"})}}}))
        assert spec.source_format == "json"

    def test_synthesized_operation_id(self):
        spec = parse_spec(doc({"/a/{x}": {"delete": {"responses": {"204": {"description": "d"}}}}}))
        assert spec.operations[0].operation_id == "DELETE /a/{x}"

    def test_ref_inlined(self):
        comps = {"schemas": {"U": {"type": "object", "properties": {"id": {"type": "integer"}}}}}
        spec = parse_spec(doc({"/u": {"get": {"responses": ok({"$ref": "#/components/schemas/U"})}}}, comps))
        schema = spec.operations[0].success_schema
        assert schema.kind == "object"
        assert schema.properties["id"].kind == "integer"

    def test_ref_to_response_and_parameter(self):
        comps = {
            "parameters": {"Id": {"name": "id", "in": "path", "required": True, "schema": {"type": "integer"}}},
            "responses": {"One": {"description": "x", "content": {"application/json": {"schema": {"type": "object", "properties": {"id": {"type": "integer"}}}}}}},
        }
        spec = parse_spec(doc({"/u/{id}": {"get": {"parameters": [{"$ref": "#/components/parameters/Id"}],
                                                    "responses": {"200": {"$ref": "#/components/responses/One"}}}}}, comps))
        op = spec.operations[0]
        assert op.parameters[0].name == "id" and op.parameters[0].location == "path"
        assert "id" in op.success_schema.properties

    def test_dangling_ref(self):
        with pytest.raises(UnresolvedRef):
            parse_spec(doc({"/u": {"get": {"responses": ok({"$ref": "#/components/schemas/Nope"})}}}))

    def test_external_ref_rejected(self):
        with pytest.raises(UnresolvedRef):
            parse_spec(doc({"/u": {"get": {"responses": ok({"$ref": "other.yaml#/U"})}}}))

    def test_cyclic_schema_truncated(self):
        comps = {"schemas": {"Node": {"type": "object", "properties": {
            "name": {"type": "string"}, "next": {"$ref": "#/components/schemas/Node"}}}}}
        spec = parse_spec(doc({"/n": {"get": {"responses": ok({"$ref": "#/components/schemas/Node"})}}}, comps))
        node = spec.operations[0].success_schema
        assert node.properties["next"].truncated
        assert any("cyclic" in w for w in spec.warnings)

    def test_all_of_merged(self):
        comps = {"schemas": {"A": {"type": "object", "required": ["a"], "properties": {"a": {"type": "string"}}}}}
        schema = {"allOf": [{"$ref": "#/components/schemas/A"}, {"type": "object", "properties": {"b": {"type": "integer"}}}]}
        spec = parse_spec(doc({"/x": {"get": {"responses": ok(schema)}}}, comps))
        node = spec.operations[0].success_schema
        assert list(node.properties) == ["a", "b"]
        assert node.properties["a"].required

    def test_one_of_first_branch_with_warning(self):
        schema = {"oneOf": [{"type": "object", "properties": {"a": {"type": "string"}}}, {"type": "integer"}]}
        spec = parse_spec(doc({"/x": {"get": {"responses": ok(schema)}}}))
        assert list(spec.operations[0].success_schema.properties) == ["a"]
        assert any("oneOf" in w for w in spec.warnings)

    def test_duplicate_operation_id(self):
        with pytest.raises(ParseError):
            parse_spec(doc({"/a": {"get": {"operationId": "x", "responses": {}}},
                            "/b": {"get": {"operationId": "x", "responses": {}}}}))

    def test_swagger2_rejected(self):
        with pytest.raises(UnsupportedVersion):
            parse_spec(json.dumps({"swagger": "2.0", "paths": {}}))

    def test_not_a_document(self):
        with pytest.raises(ParseError):
            parse_spec("- just\n- a list\n")

    def test_path_level_parameters_shared(self):
        spec = parse_spec(doc({"/u/{id}": {"parameters": [{"name": "id", "in": "path", "schema": {"type": "string"}}],
                                           "get": {"responses": {}}, "delete": {"responses": {}}}}))
        assert all(op.parameters[0].name == "id" and op.parameters[0].required for op in spec.operations)

    def test_lowest_2xx_is_success(self):
        spec = parse_spec(doc({"/a": {"post": {"responses": {
            "400": {"description": "bad", "content": {"application/json": {"schema": {"type": "string"}}}},
            "201": {"description": "c", "content": {"application/json": {"schema": {"type": "integer"}}}},
            "202": {"description": "a", "content": {"application/json": {"schema": {"type": "boolean"}}}}}}}}))
        op = spec.operations[0]
        assert op.success_status == "201"
        assert op.success_schema.kind == "integer"

    def test_schema_metadata(self):
        node = schema_from_dict({"type": "integer", "default": 0, "example": 4, "enum": [0, 4], "minimum": 0})
        assert node.default_value == 0 and node.has_default
        assert node.example_values == (4,)
        assert node.enum_values == (0, 4)
        assert schema_from_dict({"type": "string"}).default_value is UNSET


class TestFlatten:
    def test_nested_arrays_and_objects(self):
        node = schema_from_dict({"type": "object", "properties": {
            "id": {"type": "integer"},
            "owner": {"type": "object", "properties": {"name": {"type": "string"}}},
            "tags": {"type": "array", "items": {"type": "string"}},
            "lines": {"type": "array", "items": {"type": "object", "properties": {"sku": {"type": "string"}}}},
        }})
        assert [str(p) for p, _ in flatten_fields(node)] == ["id", "owner.name", "tags.[]", "lines.[].sku"]

    def test_scalar_root(self):
        assert [(str(p), n.kind) for p, n in flatten_fields(SchemaNode("string"))] == [("", "string")]

    def test_depth_limit(self):
        node = SchemaNode("string")
        for _ in range(40):
            node = SchemaNode("object", properties={"x": node})
        with pytest.raises(RecursionLimit):
            flatten_fields(node)

    def test_parse_depth_limit_truncates(self):
        raw = {"type": "string"}
        for _ in range(40):
            raw = {"type": "object", "properties": {"x": raw}}
        spec = parse_spec(doc({"/d": {"get": {"responses": ok(raw)}}}))
        assert spec.warnings


class TestRoundTrip:
    def test_to_document_reparses_equal(self, tmp_path):
        spec = parse_spec(USERS_API)
        again = parse_spec(yaml.safe_dump(to_document(spec)))
        assert again == spec

    def test_corpus_round_trip(self):
        from pathlib import Path

        for path in sorted((Path(__file__).parent / "corpus").glob("*")):
            if path.suffix not in (".yaml", ".json") or "truth" in path.name or path.name == "expected.yaml":
                continue
            spec = load_spec(str(path))
            assert parse_spec(json.dumps(to_document(spec))) == spec, path.name
