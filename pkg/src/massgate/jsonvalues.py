"""Read, graft and compare values inside JSON documents by field path."""

from __future__ import annotations

import math
from typing import Any

from .spec_model import ARRAY_SEGMENT, FieldPath

REL_TOL = 1e-9
_MISSING = object()


def extract(doc: Any, path: FieldPath) -> Any:
    """Value at ``path``; ``[]`` maps over list elements. Raises KeyError if absent."""
    value = _extract(doc, path.segments)
    if value is _MISSING:
        raise KeyError(str(path))
    return value


def _extract(doc: Any, segs: tuple[str, ...]) -> Any:
    if not segs:
        return doc
    head, rest = segs[0], segs[1:]
    if head == ARRAY_SEGMENT:
        if not isinstance(doc, list):
            return _MISSING
        out = [_extract(item, rest) for item in doc]
        return [v for v in out if v is not _MISSING]
    if isinstance(doc, dict) and head in doc:
        return _extract(doc[head], rest)
    return _MISSING


def has(doc: Any, path: FieldPath) -> bool:
    return _extract(doc, path.segments) is not _MISSING


def graft(doc: Any, path: FieldPath, value: Any) -> Any:
    """Return a copy of ``doc`` with ``value`` placed at ``path``.

    Object levels are created as needed; a ``[]`` segment produces a
    one-element list.
    """
    return _graft(doc, path.segments, value)


def _graft(doc: Any, segs: tuple[str, ...], value: Any) -> Any:
    if not segs:
        return value
    head, rest = segs[0], segs[1:]
    if head == ARRAY_SEGMENT:
        first = doc[0] if isinstance(doc, list) and doc else None
        return [_graft(first, rest, value)]
    base = dict(doc) if isinstance(doc, dict) else {}
    base[head] = _graft(base.get(head), rest, value)
    return base


def locate(doc: Any, id_path: FieldPath, id_value: Any) -> Any:
    """Find the list element whose id (at ``id_path``) equals ``id_value``.

    ``id_path`` must contain a ``[]`` segment marking the list; without one,
    ``doc`` itself is the resource and is returned when its id matches.
    """
    segs = id_path.segments
    if ARRAY_SEGMENT not in segs:
        found = _extract(doc, segs)
        return doc if found is not _MISSING and values_equal(found, id_value) else None
    cut = segs.index(ARRAY_SEGMENT)
    container = _extract(doc, segs[:cut])
    if not isinstance(container, list):
        return None
    for item in container:
        found = _extract(item, segs[cut + 1 :])
        if found is not _MISSING and values_equal(found, id_value):
            return item
    return None


def _as_number(v: Any) -> float | None:
    if isinstance(v, bool):
        return None
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            return None
    return None


def values_equal(a: Any, b: Any) -> bool:
    """JSON-scalar equality: booleans strict, numbers and numeric strings coerced.

    Floating-point comparisons use a relative tolerance of 1e-9.
    """
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(values_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(values_equal(a[k], b[k]) for k in a)
    if isinstance(a, (int, float)) or isinstance(b, (int, float)):
        x, y = _as_number(a), _as_number(b)
        if x is None or y is None:
            return False
        return math.isclose(x, y, rel_tol=REL_TOL, abs_tol=0.0) or x == y
    return a == b


def same_id(a: Any, b: Any) -> bool:
    """Resource-id equality; path parameters arrive as strings."""
    if a is None or b is None:
        return False
    return values_equal(a, b) or str(a) == str(b)
