from massgate.pipeline import analyze
from massgate.readonly import ReadOnlyCandidate, build_groups, detect_readonly
from massgate.semantics import CrudSemantics, READS, WRITES, infer_annotation
from massgate.spec_model import parse_spec
from massgate.stemmer import stem
from specdocs import USERS_API


def brute_force(spec, annotations):
    """Independent oracle: compare raw leaf names across every read/write pair."""
    out = set()
    by_type = {}
    for op in spec.operations:
        ann = annotations[op.operation_id]
        if ann.resource_type and ann.semantics is not CrudSemantics.NONE:
            by_type.setdefault(ann.resource_type, []).append((op, ann))
    for rt, members in by_type.items():
        ids = {stem(p.name) for _, a in members for p in (a.resource_id_input, a.resource_id_output) if p}
        for rop, ra in members:
            if ra.semantics not in READS:
                continue
            for path, _ in rop.output_fields():
                if not path.name or stem(path.name) in ids:
                    continue
                written = any(
                    stem(path.name) == stem(ip.name)
                    for wop, wa in members if wa.semantics in WRITES
                    for ip, _ in wop.input_fields() if ip.name
                )
                if not written:
                    out.add((rt, stem(path.name)))
    return out


def test_users_api_admin_is_the_only_candidate():
    analysis = analyze(parse_spec(USERS_API), seed=0)
    assert [(c.resource_type, c.field_name, str(c.field_path)) for c in analysis.candidates] == [
        ("user", "admin", "[].admin")
    ]
    assert analysis.candidates[0].witness_read_op == "retrieve_all_users"


def test_matches_brute_force_on_fixture():
    from massgate.fixture import spec_text

    analysis = analyze(parse_spec(spec_text()), seed=0)
    got = {(c.resource_type, stem(c.field_name)) for c in analysis.candidates}
    assert got == brute_force(analysis.spec, analysis.annotations)


def test_boolean_candidates_first():
    from massgate.fixture import spec_text

    analysis = analyze(parse_spec(spec_text()), seed=0)
    kinds = [c.leaf_schema.kind == "boolean" or bool(c.leaf_schema.enum_values) for c in analysis.candidates]
    assert kinds == sorted(kinds, reverse=True)


def test_no_read_operation_no_candidates():
    spec = parse_spec(USERS_API.replace("    get:\n      operationId: retrieve_all_users", "    patch:\n      operationId: retrieve_all_users"))
    anns = {op.operation_id: infer_annotation(op, "user") for op in spec.operations}
    assert detect_readonly(build_groups(spec.operations, anns)) == []


def test_candidate_round_trip():
    analysis = analyze(parse_spec(USERS_API), seed=0)
    c = analysis.candidates[0]
    assert ReadOnlyCandidate.from_dict(c.to_dict()) == c
