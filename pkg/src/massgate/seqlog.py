"""JSON-lines log of every HTTP exchange and test sequence.

Two record types share one file::

    {"type": "exchange", "index": 0, "seq_id": 3, "run": 1, ...}
    {"type": "sequence", "case": {...}, "run": 1, "status": "instantiated", ...}

Exchange indices are global and dense; findings cite them as evidence.
Bodies are framed as ``{"json": ...}``, ``{"text": ...}`` or
``{"base64": ...}`` so binary responses survive the round trip.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Iterator

from .errors import InstantiationFailed, MassgateError
from .executor import HttpExchange
from .oracle import TestCase
from .testgen import TEMPLATES, ConcreteRequest, TestSequence

LOG_VERSION = 1


def frame_body(body: Any) -> dict | None:
    if body is None:
        return None
    if isinstance(body, (bytes, bytearray)):
        return {"base64": base64.b64encode(bytes(body)).decode("ascii")}
    if isinstance(body, str):
        return {"text": body}
    return {"json": body}


def unframe_body(framed: dict | None) -> Any:
    if framed is None:
        return None
    if "base64" in framed:
        return base64.b64decode(framed["base64"])
    if "text" in framed:
        return framed["text"]
    return framed["json"]


def exchange_record(ex: HttpExchange, meta: dict) -> dict:
    return {
        "type": "exchange",
        "index": ex.index,
        **meta,
        "request": ex.request.to_dict(),
        "status": ex.status,
        "status_class": ex.status_class,
        "response": frame_body(ex.response_body),
        "latency_ms": round(ex.latency_ms, 3),
        "timestamp": ex.timestamp,
        "parse_error": ex.parse_error,
        "error": ex.error,
    }


def exchange_from_record(rec: dict) -> HttpExchange:
    return HttpExchange(
        request=ConcreteRequest.from_dict(rec["request"]),
        status=rec["status"],
        status_class=rec["status_class"],
        response_body=unframe_body(rec.get("response")),
        latency_ms=rec.get("latency_ms", 0.0),
        timestamp=rec.get("timestamp", 0.0),
        parse_error=rec.get("parse_error"),
        error=rec.get("error"),
        index=rec["index"],
    )


@dataclass
class SequenceLog:
    """Collects records in memory and, when given a stream, writes them through."""

    stream: IO[str] | None = None
    records: list[dict] = field(default_factory=list)
    _next_index: int = 0

    def __post_init__(self):
        self._emit({"type": "header", "version": LOG_VERSION})

    def _emit(self, rec: dict) -> None:
        self.records.append(rec)
        if self.stream is not None:
            self.stream.write(json.dumps(rec, sort_keys=True, default=repr) + "\n")
            self.stream.flush()

    @property
    def exchange_count(self) -> int:
        return self._next_index

    def record(self, ex: HttpExchange, meta: dict) -> None:
        ex.index = self._next_index
        self._next_index += 1
        self._emit(exchange_record(ex, meta))

    def add_sequence(self, case: TestCase, run: int, result: TestSequence | InstantiationFailed | None) -> None:
        rec: dict[str, Any] = {"type": "sequence", "case": case.to_dict(), "run": run}
        if result is None:
            rec["status"] = "skipped"
        elif isinstance(result, InstantiationFailed):
            rec.update(status="failed", message=str(result), all_exchanges=[e.index for e in result.exchanges])
        else:
            rec.update(
                status="instantiated",
                resource_id=result.resource_id_value,
                injection_value=result.injection_value,
                second_injection_value=result.second_injection_value,
                pre_injection_value=result.pre_injection_value,
                exchanges=[e.index for e in result.exchanges],
                all_exchanges=[e.index for e in result.all_exchanges],
            )
        self._emit(rec)

    def sequence_summaries(self) -> list[dict]:
        out = []
        for rec in self.records:
            if rec["type"] != "sequence":
                continue
            case = rec["case"]
            out.append(
                {
                    "seq_id": case["index"],
                    "run": rec["run"],
                    "template": case["template"],
                    "resource_type": case["resource_type"],
                    "field": case["candidate"]["field_path"],
                    "status": rec["status"],
                    "exchanges": rec.get("exchanges", []),
                }
            )
        return out


def read_records(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except ValueError as exc:
                raise MassgateError(f"{path}:{lineno}: bad log line: {exc}") from exc


@dataclass
class RecordedCase:
    case: TestCase
    runs: dict[int, TestSequence | InstantiationFailed | None]


def load_cases(records: list[dict]) -> list[RecordedCase]:
    """Rebuild test cases and their runs from log records, in log order."""
    exchanges = {r["index"]: exchange_from_record(r) for r in records if r.get("type") == "exchange"}

    def pick(indices: list[int]) -> list[HttpExchange]:
        try:
            return [exchanges[i] for i in indices]
        except KeyError as exc:
            raise MassgateError(f"sequence cites unknown exchange {exc}") from exc

    cases: dict[int, RecordedCase] = {}
    for rec in records:
        if rec.get("type") == "header" and rec.get("version") != LOG_VERSION:
            raise MassgateError(f"unsupported log version {rec.get('version')!r}")
        if rec.get("type") != "sequence":
            continue
        case = TestCase.from_dict(rec["case"])
        entry = cases.setdefault(case.index, RecordedCase(case, {}))
        status = rec["status"]
        if status == "skipped":
            result = None
        elif status == "failed":
            result = InstantiationFailed(rec.get("message", ""), exchanges=pick(rec.get("all_exchanges", [])))
        else:
            seq_ex = pick(rec["exchanges"])
            result = TestSequence(
                template=TEMPLATES[case.template],
                resource_type=case.resource_type,
                candidate=case.candidate,
                requests=[e.request for e in seq_ex],
                exchanges=seq_ex,
                resource_id_value=rec.get("resource_id"),
                injection_value=rec.get("injection_value"),
                second_injection_value=rec.get("second_injection_value"),
                pre_injection_value=rec.get("pre_injection_value"),
                all_exchanges=pick(rec.get("all_exchanges", [])),
                seq_id=case.index,
                run=rec["run"],
            )
        entry.runs[rec["run"]] = result
    return list(cases.values())
