import pytest

from massgate.jsonvalues import extract, graft, has, locate, same_id, values_equal
from massgate.spec_model import FieldPath

P = FieldPath.parse


def test_extract_nested_and_lists():
    doc = {"items": [{"id": 1, "tag": {"k": "a"}}, {"id": 2}]}
    assert extract(doc, P("items.[].id")) == [1, 2]
    assert extract(doc, P("items.[].tag.k")) == ["a"]
    assert has(doc, P("items"))
    assert not has(doc, P("missing"))
    with pytest.raises(KeyError):
        extract(doc, P("items.id"))


def test_graft_builds_levels_without_mutating():
    doc = {"a": 1}
    out = graft(doc, P("meta.flags.admin"), True)
    assert out == {"a": 1, "meta": {"flags": {"admin": True}}}
    assert doc == {"a": 1}
    assert graft(None, P("[].x"), 3) == [{"x": 3}]


def test_locate():
    doc = [{"id": 1, "v": "a"}, {"id": 2, "v": "b"}]
    assert locate(doc, P("[].id"), "2") == {"id": 2, "v": "b"}
    assert locate(doc, P("[].id"), 9) is None
    assert locate({"data": doc}, P("data.[].id"), 1)["v"] == "a"
    assert locate({"id": 5}, P("id"), 5) == {"id": 5}
    assert locate({"id": 5}, P("id"), 6) is None


@pytest.mark.parametrize(
    "a, b, eq",
    [
        (True, True, True), (True, 1, False), (0, False, False),
        (1, 1.0, True), ("3", 3, True), ("x", 3, False),
        (0.1 + 0.2, 0.3, True), (1.0, 1.0001, False),
        ([1, "a"], [1.0, "a"], True), ({"a": 1}, {"a": 1, "b": 2}, False),
        ("a", "a", True), (None, None, True), (None, 0, False),
    ],
)
def test_values_equal(a, b, eq):
    assert values_equal(a, b) is eq


def test_same_id():
    assert same_id("12", 12)
    assert same_id("abc", "abc")
    assert not same_id(None, None)
