"""Command-line entry point: ``massgate {analyze,scan,replay,score,fixture}``.

Every option can also come from a ``MASSGATE_<NAME>`` environment variable,
e.g. ``MASSGATE_BASE_URL`` or ``MASSGATE_SEED``; flags win over the
environment.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from contextlib import ExitStack
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .errors import MassgateError
from .executor import HttpExecutor
from .pipeline import Analysis, analyze, replay, scan
from .report import ScanReport, exit_code, load_report, load_truth, render, score_against_ground_truth
from .semantics import annotate_spec
from .seqlog import SequenceLog, read_records
from .spec_model import load_spec
from .testgen import GenConfig

log = logging.getLogger("massgate")

ENV_PREFIX = "MASSGATE_"
MODES = ("analyze", "scan", "replay", "score")


@dataclass
class CliConfig:
    mode: str
    spec: str | None = None
    base_url: str | None = None
    seed: int = 0
    max_op_attempts: int = 12
    max_template_attempts: int = 3
    headers: dict[str, str] = field(default_factory=dict)
    timeout_ms: int = 10000
    output: str | None = None
    truth: str | None = None
    log: str | None = None
    report: str | None = None
    figures: str | None = None
    annotated_out: str | None = None
    fmt: str = "json"
    k_max: int = 10
    restarts: int = 10
    values: dict[str, tuple[Any, Any]] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode in ("analyze", "scan") and not self.spec:
            raise ValueError(f"{self.mode} requires --spec")
        if self.mode == "replay" and not self.log:
            raise ValueError("replay requires --log")
        if self.mode == "score" and not (self.report and self.truth):
            raise ValueError("score requires --report and --truth")

    def gen_config(self) -> GenConfig:
        return GenConfig(
            max_operation_attempts=self.max_op_attempts,
            max_template_attempts=self.max_template_attempts,
            rng_seed=self.seed,
            request_timeout=self.timeout_ms / 1000.0,
        )


def _env(name: str, default: Any = None) -> Any:
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), default)


def _parse_header(text: str) -> tuple[str, str]:
    if ":" not in text:
        raise argparse.ArgumentTypeError(f"header must look like 'Name: value', got {text!r}")
    k, v = text.split(":", 1)
    return k.strip(), v.strip()


def _parse_values(text: str) -> tuple[str, tuple[Any, Any]]:
    name, sep, rest = text.partition("=")
    parts = rest.split(",")
    if not sep or len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected FIELD=V1,V2, got {text!r}")
    vals = []
    for p in parts:
        try:
            vals.append(json.loads(p))
        except ValueError:
            vals.append(p)
    if vals[0] == vals[1]:
        raise argparse.ArgumentTypeError("the two injection values must differ")
    return name, (vals[0], vals[1])


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", default=_env("output"), help="write the report here (default: stdout)")
    common.add_argument("--format", dest="fmt", choices=("json", "text"), default=_env("format", "json"))
    common.add_argument("--truth", default=_env("truth"), help="ground-truth YAML to score against")
    common.add_argument("-v", "--verbose", action="count", default=0)

    analysis = argparse.ArgumentParser(add_help=False)
    analysis.add_argument("--spec", default=_env("spec"), help="OpenAPI 3.x document (YAML or JSON)")
    analysis.add_argument("--seed", type=int, default=int(_env("seed", 0)))
    analysis.add_argument("--k-max", type=int, default=int(_env("k_max", 10)))
    analysis.add_argument("--restarts", type=int, default=int(_env("restarts", 10)))
    analysis.add_argument("--figures", default=_env("figures"), help="directory for PNG figures and CSV tables")
    analysis.add_argument("--annotated-out", default=_env("annotated_out"),
                          help="write the spec with x-crud* annotations here")

    parser = argparse.ArgumentParser(prog="massgate", description="Detect mass assignment in REST APIs.")
    sub = parser.add_subparsers(dest="mode", required=True)

    sub.add_parser("analyze", parents=[common, analysis], help="static analysis only; no network traffic")

    p = sub.add_parser("scan", parents=[common, analysis], help="analyze, then generate and run tests")
    p.add_argument("--base-url", default=_env("base_url"), help="API root (default: first server in the spec)")
    p.add_argument("--max-op-attempts", type=int, default=int(_env("max_op_attempts", 12)))
    p.add_argument("--max-template-attempts", type=int, default=int(_env("max_template_attempts", 3)))
    p.add_argument("--header", action="append", type=_parse_header, default=None,
                   help="extra request header 'Name: value' (repeatable)")
    p.add_argument("--timeout-ms", type=int, default=int(_env("timeout_ms", 10000)))
    p.add_argument("--log", default=_env("log"), help="write the JSON-lines sequence log here")
    p.add_argument("--values", action="append", type=_parse_values, default=None, metavar="FIELD=V1,V2",
                   help="fix the two injection values for a field (JSON literals)")

    p = sub.add_parser("replay", parents=[common], help="re-run the oracle over a recorded sequence log")
    p.add_argument("--log", default=_env("log"), required=_env("log") is None)

    p = sub.add_parser("score", parents=[common], help="score a saved report against ground truth")
    p.add_argument("--report", default=_env("report"), required=_env("report") is None)

    p = sub.add_parser("fixture", help="run the bundled fixture API", add_help=False)
    p.add_argument("fixture_args", nargs=argparse.REMAINDER)
    return parser


def config_from_args(ns: argparse.Namespace) -> CliConfig:
    headers = {}
    env_headers = _env("headers")
    if env_headers:
        for item in env_headers.split(";"):
            if item.strip():
                k, v = _parse_header(item)
                headers[k] = v
    for k, v in getattr(ns, "header", None) or []:
        headers[k] = v
    return CliConfig(
        mode=ns.mode,
        spec=getattr(ns, "spec", None),
        base_url=getattr(ns, "base_url", None),
        seed=getattr(ns, "seed", 0),
        max_op_attempts=getattr(ns, "max_op_attempts", 12),
        max_template_attempts=getattr(ns, "max_template_attempts", 3),
        headers=headers,
        timeout_ms=getattr(ns, "timeout_ms", 10000),
        output=ns.output,
        truth=ns.truth,
        log=getattr(ns, "log", None),
        report=getattr(ns, "report", None),
        figures=getattr(ns, "figures", None),
        annotated_out=getattr(ns, "annotated_out", None),
        fmt=ns.fmt,
        k_max=getattr(ns, "k_max", 10),
        restarts=getattr(ns, "restarts", 10),
        values=dict(getattr(ns, "values", None) or []),
    )


def build_report(mode: str, analysis: Analysis, findings=None, seqlog: SequenceLog | None = None) -> ScanReport:
    anns = [analysis.annotations[op.operation_id] for op in analysis.spec.operations]
    return ScanReport(
        mode=mode,
        spec_title=analysis.spec.title,
        operation_count=len(analysis.spec.operations),
        group_count=len(analysis.groups),
        annotations=anns,
        clusters=analysis.clusters(),
        candidates=list(analysis.candidates),
        sequences=seqlog.sequence_summaries() if seqlog else [],
        findings=findings,
        timings_ms=dict(analysis.timings_ms),
        warnings=list(analysis.spec.warnings),
        exchange_count=seqlog.exchange_count if seqlog else 0,
    )


def _emit(report: ScanReport, cfg: CliConfig, out) -> None:
    if cfg.truth:
        report.metrics = score_against_ground_truth(report, load_truth(cfg.truth))
    data = render(report, cfg.fmt)
    if cfg.output:
        Path(cfg.output).write_bytes(data)
        out.write(render(report, "text").decode())
    else:
        out.write(data.decode())


def _static(cfg: CliConfig) -> Analysis:
    t = time.perf_counter()
    spec = load_spec(cfg.spec)
    parse_ms = round((time.perf_counter() - t) * 1000.0, 3)
    analysis = analyze(spec, k_max=cfg.k_max, restarts=cfg.restarts, seed=cfg.seed)
    analysis.timings_ms = {"parse": parse_ms, **analysis.timings_ms}
    if cfg.annotated_out:
        anns = [analysis.annotations[op.operation_id] for op in spec.operations]
        Path(cfg.annotated_out).write_bytes(annotate_spec(spec, anns))
    return analysis


def _figures(cfg: CliConfig, analysis: Analysis, findings) -> None:
    if cfg.figures:
        from .plotting import write_artifacts  # matplotlib is only needed here

        write_artifacts(analysis, findings, cfg.figures)


def run(cfg: CliConfig, out=None) -> int:
    out = out or sys.stdout
    if cfg.mode == "analyze":
        analysis = _static(cfg)
        report = build_report("analyze", analysis)
        _figures(cfg, analysis, None)
        _emit(report, cfg, out)
        return 0

    if cfg.mode == "scan":
        analysis = _static(cfg)
        base_url = cfg.base_url or analysis.spec.base_url
        if not base_url or not base_url.startswith(("http://", "https://")):
            raise MassgateError("scan needs an absolute --base-url (the spec has no usable server entry)")
        with ExitStack() as stack:
            stream = stack.enter_context(open(cfg.log, "w", encoding="utf-8")) if cfg.log else None
            seqlog = SequenceLog(stream)
            executor = HttpExecutor(base_url, cfg.headers, cfg.timeout_ms / 1000.0)
            stack.callback(executor.close)
            findings = scan(analysis, executor, cfg.gen_config(), seqlog, cfg.values)
        report = build_report("scan", analysis, findings, seqlog)
        _figures(cfg, analysis, findings)
        _emit(report, cfg, out)
        return exit_code(report)

    if cfg.mode == "replay":
        t = time.perf_counter()
        records = list(read_records(cfg.log))
        findings = replay(records)
        seqlog = SequenceLog()
        seqlog.records.extend(r for r in records if r.get("type") == "sequence")
        seqlog._next_index = sum(1 for r in records if r.get("type") == "exchange")
        report = ScanReport(
            mode="replay",
            sequences=seqlog.sequence_summaries(),
            findings=findings,
            exchange_count=seqlog.exchange_count,
            timings_ms={"replay": round((time.perf_counter() - t) * 1000.0, 3)},
        )
        _emit(report, cfg, out)
        return exit_code(report)

    # score
    report = load_report(cfg.report)
    report.metrics = score_against_ground_truth(report, load_truth(cfg.truth))
    cfg.truth = None
    _emit(report, cfg, out)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "fixture":
        from .fixture.server import main as fixture_main

        return fixture_main(argv[1:])
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(ns.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(ns)
    except ValueError as exc:
        parser.error(str(exc))
    try:
        return run(cfg)
    except (MassgateError, OSError, ValueError) as exc:
        print(f"massgate: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
