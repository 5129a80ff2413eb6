"""Black-box detection of mass assignment in OpenAPI-described REST APIs.

Typical library use::

    from massgate import load_spec, analyze
    analysis = analyze(load_spec("openapi.yaml"))
    for cand in analysis.candidates:
        print(cand.resource_type, cand.field_path)
"""

from .errors import MassgateError
from .oracle import Finding, FindingKind
from .pipeline import Analysis, analyze, replay, scan
from .report import ScanReport, load_truth, render, score_against_ground_truth
from .semantics import CrudAnnotation, CrudSemantics
from .seqlog import SequenceLog
from .spec_model import ApiSpec, load_spec, parse_spec
from .testgen import GenConfig

__version__ = "0.1.0"

__all__ = [
    "Analysis",
    "ApiSpec",
    "CrudAnnotation",
    "CrudSemantics",
    "Finding",
    "FindingKind",
    "GenConfig",
    "MassgateError",
    "ScanReport",
    "SequenceLog",
    "analyze",
    "load_spec",
    "load_truth",
    "parse_spec",
    "render",
    "replay",
    "scan",
    "score_against_ground_truth",
]
