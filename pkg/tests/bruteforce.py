"""Re-derive findings straight from raw log records.

Deliberately shares no code with massgate.oracle: it walks the JSON records,
looks values up by hand and applies the verdict rules from first principles.
"""

import math

MISSING = object()


def dig(doc, segs):
    if not segs:
        return doc
    head, rest = segs[0], segs[1:]
    if head == "[]":
        if not isinstance(doc, list):
            return MISSING
        return [v for v in (dig(x, rest) for x in doc) if v is not MISSING]
    if isinstance(doc, dict) and head in doc:
        return dig(doc[head], rest)
    return MISSING


def same(a, b):
    if isinstance(a, bool) or isinstance(b, bool):
        return type(a) is type(b) and a == b
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return set(a) == set(b) and all(same(a[k], b[k]) for k in a)
    nums = []
    for v in (a, b):
        if isinstance(v, (int, float)):
            nums.append(float(v))
        elif isinstance(v, str):
            try:
                nums.append(float(v))
            except ValueError:
                pass
    if isinstance(a, (int, float)) or isinstance(b, (int, float)):
        return len(nums) == 2 and (nums[0] == nums[1] or math.isclose(nums[0], nums[1], rel_tol=1e-9))
    return a == b


def same_id(a, b):
    return a is not None and b is not None and (same(a, b) or str(a) == str(b))


def segs(path):
    return tuple(path.split(".")) if path else ()


def unstar(path):
    return ".".join(s for s in segs(path) if s != "[]")


def body_of(rec):
    r = rec["response"]
    if r is None:
        return None
    return r.get("json", r.get("text"))


def request_id(req):
    loc = req["id_locator"]
    if not loc:
        return None
    where, name = loc
    if where == "path":
        return req["path_params"].get(name)
    if where == "query":
        return req["query"].get(name)
    if where == "header":
        return req["headers"].get(name)
    v = dig(req["body"], segs(name))
    return None if v is MISSING else v


def resource(rec, rid):
    req, body = rec["request"], body_of(rec)
    rpath = req["response_id_path"]
    if rpath and "[]" in segs(rpath):
        s = segs(rpath)
        cut = s.index("[]")
        container = dig(body, s[:cut])
        if not isinstance(container, list):
            return None
        for item in container:
            v = dig(item, s[cut + 1:])
            if v is not MISSING and same(v, rid):
                return item
        return None
    return None if isinstance(body, list) else body


def judge(run, ex, field):
    """'mismatch' | 'missing' | True | False for an instantiated run record."""
    rid = run["resource_id"]
    if rid is None:
        return "mismatch", None
    chain = [ex[i] for i in run["exchanges"]]
    for rec in chain:
        req = rec["request"]
        if req["step_role"] in ("create", "rm_before", "rm_after"):
            continue
        v = request_id(req)
        if v is not None and not same_id(v, rid):
            return "mismatch", None
    verify = next(r for r in chain if r["request"]["verify"])
    res = resource(verify, rid)
    if res is None:
        return "mismatch", None
    value = dig(res, segs(field))
    if value is MISSING:
        return "missing", f"{field} absent from {verify['request']['operation_id']} response"
    return same(value, run["injection_value"]), None


def pair(run, ex):
    chain = [ex[i] for i in run["exchanges"]]
    inj = next(r for r in chain if r["request"]["injected_field"] is not None)
    ver = next(r for r in chain if r["request"]["verify"])
    return [inj["index"], ver["index"]], inj


def side(indices, ex, case, field, overwritten, verify_ix=None):
    out, seen = [], set()
    for i in indices:
        rec = ex[i]
        op = rec["request"]["operation_id"]
        if 500 <= rec["status"] <= 599:
            if (op, "ServerError") not in seen:
                seen.add((op, "ServerError"))
                out.append(finding("ServerError", case, field, op, [], [i], f"HTTP {rec['status']}"))
        elif 200 <= rec["status"] <= 299 and rec["request"]["injected_field"] and overwritten is False:
            if (op, "MalformedAccepted") not in seen:
                seen.add((op, "MalformedAccepted"))
                ev = [i] + ([verify_ix] if verify_ix is not None else [])
                out.append(finding("MalformedAccepted", case, field, op,
                                   [rec["request"]["injected_field"]["value"]], ev,
                                   "undocumented field accepted and ignored"))
    return out


def finding(kind, case, field, op, values, evidence, note):
    return {"kind": kind, "resource_type": case["resource_type"], "field_path": field, "operation_id": op,
            "template": case["template"], "injected_values": values, "evidence": evidence, "note": note}


def findings_from_log(records):
    ex = {r["index"]: r for r in records if r["type"] == "exchange"}
    cases = {}
    for r in records:
        if r["type"] == "sequence":
            cases.setdefault(r["case"]["index"], (r["case"], {}))[1][r["run"]] = r
    out = []
    for case, runs in cases.values():
        field = unstar(case["candidate"]["field_path"])
        values = case["values"]
        r1 = runs.get(1)
        if values is None or r1 is None or r1["status"] == "skipped":
            out.append(finding("NotTestable", case, field, case["operation_id"], [], [],
                               "no two distinct injection values"))
            continue
        v1, v2 = values
        nt = lambda note: finding("NotTestable", case, field, case["operation_id"], [v1], [], note)
        if r1["status"] == "failed":
            out += [nt(f"instantiation failed: {r1['message']}")] + side(r1["all_exchanges"], ex, case, field, None)
            continue
        verdict, msg = judge(r1, ex, field)
        if verdict == "mismatch":
            out += [nt("resource-id mismatch")] + side(r1["all_exchanges"], ex, case, field, None)
            continue
        if verdict == "missing":
            out += [nt(msg)] + side(r1["all_exchanges"], ex, case, field, None)
            continue
        ev1, inj = pair(r1, ex)
        op = inj["request"]["operation_id"]
        extra = side(r1["all_exchanges"], ex, case, field, verdict, ev1[1])
        if verdict is False:
            out += [finding("Clean", case, field, op, [v1], ev1, "injected value not persisted")] + extra
            continue
        r2 = runs.get(2)
        both = [v1, v2]
        if r2 is None:
            out += [finding("NotTestable", case, field, op, both, [], "second run failed: second run not recorded")]
        elif r2["status"] == "failed":
            out += [finding("NotTestable", case, field, op, both, [], f"second run failed: {r2['message']}")]
            extra += side(r2["all_exchanges"], ex, case, field, None)
        else:
            v, msg = judge(r2, ex, field)
            if v == "mismatch":
                out.append(finding("NotTestable", case, field, op, both, [], "second run: resource-id mismatch"))
            elif v == "missing":
                out.append(finding("NotTestable", case, field, op, both, [], f"second run: {msg}"))
            elif v:
                out.append(finding("MassAssignment", case, field, op, both, ev1 + pair(r2, ex)[0],
                                   "injected value persisted in both runs"))
            else:
                out.append(finding("Clean", case, field, op, both, ev1 + pair(r2, ex)[0],
                                   "possible default-value coincidence"))
            extra += side(r2["all_exchanges"], ex, case, field, None)
        out += extra
    deduped, seen = [], set()
    for f in out:
        if f["kind"] in ("MalformedAccepted", "ServerError"):
            if (f["operation_id"], f["kind"]) in seen:
                continue
            seen.add((f["operation_id"], f["kind"]))
        deduped.append(f)
    return deduped
