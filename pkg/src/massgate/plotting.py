"""Figures and delimited dumps written next to a report."""

from __future__ import annotations

import csv
from collections import Counter
from pathlib import Path
from typing import Iterable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .clustering import encoding_csv  # noqa: E402
from .oracle import Finding, FindingKind  # noqa: E402
from .pipeline import Analysis  # noqa: E402


def _encoding_figure(analysis: Analysis, path: Path) -> None:
    order = sorted(analysis.encoded, key=lambda e: (analysis.model.assignments[e.operation_id], e.operation_id))
    X = np.array([e.bits for e in order], dtype=float)
    terms = analysis.vocabulary.terms
    fig, ax = plt.subplots(figsize=(max(4.0, 0.3 * len(terms) + 2), max(3.0, 0.25 * len(order) + 1.5)))
    ax.imshow(X, aspect="auto", cmap="Greys", interpolation="nearest", vmin=0, vmax=1)
    if len(terms) <= 80:
        ax.set_xticks(range(len(terms)), terms, rotation=90, fontsize=7)
    if len(order) <= 80:
        labels = [f"{analysis.labels[analysis.model.assignments[e.operation_id]]}: {e.operation_id}" for e in order]
        ax.set_yticks(range(len(order)), labels, fontsize=7)
    ax.set_title(f"Operation encoding (k={analysis.model.k})")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _bic_figure(analysis: Analysis, path: Path) -> None:
    ks = sorted(analysis.model.bic_by_k)
    fig, ax = plt.subplots(figsize=(4.5, 3.0))
    ax.plot(ks, [analysis.model.bic_by_k[k] for k in ks], marker="o")
    ax.axvline(analysis.model.k, color="grey", linestyle="--", linewidth=1)
    ax.set_xlabel("clusters k")
    ax.set_ylabel("BIC")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _findings_figure(findings: Iterable[Finding], path: Path) -> None:
    counts = Counter(f.kind for f in findings)
    kinds = list(FindingKind)
    fig, ax = plt.subplots(figsize=(6.0, 3.0))
    ax.bar([k.value for k in kinds], [counts.get(k, 0) for k in kinds], color="#4c72b0")
    ax.set_ylabel("findings")
    ax.tick_params(axis="x", labelsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _write_csv(path: Path, header: list[str], rows: Iterable[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_artifacts(analysis: Analysis, findings: list[Finding] | None, outdir: str | Path) -> list[Path]:
    """PNG figures plus CSV tables for one run; returns the files written."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    anns = analysis.annotations
    p = out / "annotations.csv"
    _write_csv(
        p,
        ["operation_id", "method", "path", "semantics", "resource_type", "id_input", "id_output", "cluster"],
        [
            [op.operation_id, op.method, op.path, anns[op.operation_id].semantics.value,
             anns[op.operation_id].resource_type, anns[op.operation_id].resource_id_input or "",
             anns[op.operation_id].resource_id_output or "", analysis.cluster_key(op.operation_id) or ""]
            for op in analysis.spec.operations
        ],
    )
    written.append(p)

    p = out / "candidates.csv"
    _write_csv(
        p,
        ["resource_type", "field_name", "field_path", "kind", "witness_read_op"],
        [[c.resource_type, c.field_name, str(c.field_path), c.leaf_schema.kind, c.witness_read_op]
         for c in analysis.candidates],
    )
    written.append(p)

    if analysis.vocabulary is not None and analysis.model is not None:
        p = out / "encoding.csv"
        p.write_text(encoding_csv(analysis.vocabulary, analysis.encoded), encoding="utf-8")
        written.append(p)
        p = out / "encoding.png"
        _encoding_figure(analysis, p)
        written.append(p)
        if analysis.model.bic_by_k:
            p = out / "bic.png"
            _bic_figure(analysis, p)
            written.append(p)

    if findings is not None:
        p = out / "findings.csv"
        _write_csv(
            p,
            ["kind", "resource_type", "field_path", "operation_id", "template", "injected_values", "evidence", "note"],
            [[f.kind.value, f.resource_type, f.field_path, f.operation_id, f.template,
              " ".join(repr(v) for v in f.injected_values), " ".join(map(str, f.evidence)), f.note]
             for f in findings],
        )
        written.append(p)
        p = out / "findings.png"
        _findings_figure(findings, p)
        written.append(p)
    return written
