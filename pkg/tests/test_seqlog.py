import io
import json

import pytest

from massgate.errors import MassgateError
from massgate.executor import HttpExchange
from massgate.fixture import FixtureState, spec_text
from massgate.pipeline import analyze, replay, scan
from massgate.seqlog import (
    LOG_VERSION,
    SequenceLog,
    exchange_from_record,
    exchange_record,
    frame_body,
    load_cases,
    read_records,
    unframe_body,
)
from massgate.spec_model import parse_spec
from massgate.testgen import ConcreteRequest, GenConfig
from inproc import AppExecutor


@pytest.mark.parametrize("body", [None, {"a": [1, 2]}, [], "text", b"\x00\xffbin", 3.5, False])
def test_body_framing_round_trip(body):
    framed = frame_body(body)
    assert unframe_body(json.loads(json.dumps(framed))) == body


def test_exchange_record_round_trip():
    req = ConcreteRequest("op", "GET", "/x", "/x", query={"q": 1})
    ex = HttpExchange(req, 200, "2xx", b"\x89PNG", 3.25, 1.5, parse_error="binary body", index=4)
    back = exchange_from_record(json.loads(json.dumps(exchange_record(ex, {"seq_id": 0}))))
    assert back == ex


def fixture_scan(mode="vulnerable", strict=True, seed=0):
    analysis = analyze(parse_spec(spec_text()), seed=0)
    stream = io.StringIO()
    log = SequenceLog(stream)
    findings = scan(analysis, AppExecutor(FixtureState(mode, strict=strict)), GenConfig(rng_seed=seed), log)
    return findings, log, stream.getvalue()


@pytest.mark.parametrize("mode, strict", [("vulnerable", True), ("safe", True), ("safe", False)])
def test_replay_reproduces_scan(tmp_path, mode, strict):
    findings, log, text = fixture_scan(mode, strict)
    path = tmp_path / "log.jsonl"
    path.write_text(text)
    records = list(read_records(path))
    assert records == json.loads("[" + ",".join(text.splitlines()) + "]")
    assert records[0] == {"type": "header", "version": LOG_VERSION}
    assert [f.to_dict() for f in replay(records)] == [f.to_dict() for f in findings]


def test_exchange_indices_are_dense():
    _, log, _ = fixture_scan()
    idx = [r["index"] for r in log.records if r["type"] == "exchange"]
    assert idx == list(range(log.exchange_count))


def test_sequence_summaries():
    _, log, _ = fixture_scan()
    sums = log.sequence_summaries()
    assert {s["status"] for s in sums} <= {"instantiated", "failed", "skipped"}
    assert all(s["template"] for s in sums)


def test_load_cases_groups_runs():
    _, log, _ = fixture_scan()
    cases = load_cases(log.records)
    assert [c.case.index for c in cases] == sorted(c.case.index for c in cases)
    assert any(2 in c.runs for c in cases)


def test_bad_log_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"type": "header", "version": 1}\nnot json\n')
    with pytest.raises(MassgateError, match=":2:"):
        list(read_records(p))


def test_unknown_version():
    with pytest.raises(MassgateError, match="version"):
        load_cases([{"type": "header", "version": 99}])


def test_dangling_exchange_reference():
    _, log, _ = fixture_scan()
    seqs = [r for r in log.records if r["type"] == "sequence"]
    with pytest.raises(MassgateError, match="unknown exchange"):
        load_cases([log.records[0], *seqs])
