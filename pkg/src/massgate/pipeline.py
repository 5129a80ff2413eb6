"""The three phases wired together: analyze, scan, replay."""

from __future__ import annotations

import dataclasses
import logging
import random
import time
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .clustering import ClusterModel, EncodedOperation, Vocabulary, build_encoding, cluster, name_clusters
from .errors import EmptyVocabulary, InstantiationFailed, TemplateNotApplicable
from .oracle import Finding, TestCase, dedupe_side_defects, evaluate
from .readonly import ReadOnlyCandidate, ResourceGroup, build_groups, detect_readonly
from .semantics import CrudAnnotation, CrudSemantics, infer_annotation, read_annotations
from .seqlog import SequenceLog, load_cases
from .spec_model import ApiSpec, OperationDesc
from .testgen import TEMPLATES, GenConfig, choose_templates, instantiate, select_operations
from .values import distinct_pair

log = logging.getLogger(__name__)


@dataclass
class Analysis:
    spec: ApiSpec
    annotations: dict[str, CrudAnnotation]
    manual: set[str]
    vocabulary: Vocabulary | None
    encoded: list[EncodedOperation]
    model: ClusterModel | None
    labels: dict[int, str]
    groups: list[ResourceGroup]
    candidates: list[ReadOnlyCandidate]
    timings_ms: dict[str, float] = field(default_factory=dict)

    def cluster_key(self, operation_id: str) -> str | None:
        """Stable cluster identifier for scoring; manual labels get their own namespace."""
        if self.model is not None and operation_id in self.model.assignments:
            return f"cluster:{self.model.assignments[operation_id]}"
        ann = self.annotations.get(operation_id)
        if ann is not None and ann.resource_type:
            return f"manual:{ann.resource_type}"
        return None

    def clusters(self) -> dict[str, str]:
        out = {}
        for op in self.spec.operations:
            key = self.cluster_key(op.operation_id)
            if key is not None:
                out[op.operation_id] = key
        return out


def _ms(start: float) -> float:
    return round((time.perf_counter() - start) * 1000.0, 3)


def _single_cluster(ops: list[OperationDesc], seed: int) -> ClusterModel:
    return ClusterModel(
        k=1,
        mixing_weights=np.ones(1),
        bernoulli_params=np.zeros((1, 0)),
        assignments={op.operation_id: 0 for op in ops},
        log_likelihood=0.0,
        seed=seed,
    )


def analyze(spec: ApiSpec, *, k_max: int = 10, restarts: int = 10, seed: int = 0) -> Analysis:
    """Static phase: CRUD inference, clustering, resource groups, read-only candidates.

    Operations carrying ``x-crud*`` annotations keep them; an annotated
    operation without a resource type is clustered like an inferred one.
    """
    timings: dict[str, float] = {}
    t = time.perf_counter()
    manual = {a.operation_id: a for a in read_annotations(spec)}
    anns: dict[str, CrudAnnotation] = {}
    for op in spec.operations:
        anns[op.operation_id] = manual.get(op.operation_id) or infer_annotation(op)
    timings["semantics"] = _ms(t)

    t = time.perf_counter()
    to_cluster = [
        op
        for op in spec.operations
        if anns[op.operation_id].semantics is not CrudSemantics.NONE and not anns[op.operation_id].resource_type
    ]
    vocab, encoded, model, labels = None, [], None, {}
    if to_cluster:
        try:
            vocab, encoded = build_encoding(to_cluster)
            model = cluster(encoded, k_max=k_max, restarts=restarts, seed=seed)
        except EmptyVocabulary:
            log.warning("no field names to cluster on; all CRUD operations form one group")
            model = _single_cluster(to_cluster, seed)
        labels = name_clusters(model, {op.operation_id: op for op in to_cluster})
        for op in to_cluster:
            label = labels[model.assignments[op.operation_id]]
            anns[op.operation_id] = dataclasses.replace(anns[op.operation_id], resource_type=label)
    timings["clustering"] = _ms(t)

    t = time.perf_counter()
    groups = build_groups(spec.operations, anns)
    candidates = detect_readonly(groups)
    timings["readonly"] = _ms(t)
    return Analysis(spec, anns, set(manual), vocab, encoded, model, labels, groups, candidates, timings)


def plan_tests(analysis: Analysis, cfg: GenConfig, value_overrides: Mapping[str, tuple] | None = None) -> list[tuple[TestCase, ResourceGroup]]:
    """One test case per (candidate, applicable template), with its injection values.

    ``value_overrides`` maps a field name to a fixed (first, second) pair.
    """
    by_type = {g.resource_type: g for g in analysis.groups}
    overrides = dict(value_overrides or {})
    cases = []
    for cand in analysis.candidates:
        group = by_type[cand.resource_type]
        for template in choose_templates(group):
            try:
                plan = select_operations(group, template)
            except TemplateNotApplicable:
                continue
            injected_op = next(cands[0][0] for step, cands in plan if step.injected)
            index = len(cases)
            if cand.field_name in overrides:
                values = tuple(overrides[cand.field_name])
            else:
                values = distinct_pair(cand.leaf_schema, cand.field_name, random.Random(f"{cfg.rng_seed}:{index}:values"))
            case = TestCase(index, template.name, group.resource_type, cand, injected_op.operation_id, values)
            cases.append((case, group))
    return cases


def scan(
    analysis: Analysis,
    executor: Any,
    cfg: GenConfig,
    seqlog: SequenceLog,
    value_overrides: Mapping[str, tuple] | None = None,
) -> list[Finding]:
    """Dynamic phase: instantiate and execute every planned test, then judge it."""
    findings: list[Finding] = []
    t = time.perf_counter()
    for case, group in plan_tests(analysis, cfg, value_overrides):
        template = TEMPLATES[case.template]
        if case.values is None:
            seqlog.add_sequence(case, 1, None)
            findings += evaluate(case, None, _no_rerun)
            continue
        v1, v2 = case.values

        def run(run_no: int, first: Any, second: Any):
            rng = random.Random(f"{cfg.rng_seed}:{case.index}:{run_no}")
            try:
                seq = instantiate(template, group, case.candidate, cfg, executor, rng, first, second,
                                  record=seqlog.record, seq_id=case.index, run=run_no)
            except InstantiationFailed as exc:
                seqlog.add_sequence(case, run_no, exc)
                raise
            seqlog.add_sequence(case, run_no, seq)
            return seq

        try:
            first = run(1, v1, v2)
        except InstantiationFailed as exc:
            first = exc
        findings += evaluate(case, first, lambda: run(2, v2, v1))
    analysis.timings_ms["scan"] = _ms(t)
    return dedupe_side_defects(findings)


def _no_rerun():
    raise InstantiationFailed("no second run")


def replay(records: list[dict]) -> list[Finding]:
    """Re-judge a recorded log with the same oracle the scan used."""
    findings: list[Finding] = []
    for rc in load_cases(records):
        run2 = rc.runs.get(2)

        def rerun(run2=run2):
            if run2 is None:
                raise InstantiationFailed("second run not recorded")
            if isinstance(run2, InstantiationFailed):
                raise run2
            return run2

        findings += evaluate(rc.case, rc.runs.get(1), rerun)
    return dedupe_side_defects(findings)
