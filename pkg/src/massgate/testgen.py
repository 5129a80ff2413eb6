"""Turn abstract injection templates into executed request sequences.

A template is a list of CRUD steps with exactly one injected step. Each step
is realized by one of the group's operations with matching semantics and is
retried with fresh input values until it returns 2xx. When a step runs out
of attempts the whole template restarts from scratch; when the restarts run
out, instantiation fails and the candidate is reported as not testable.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Any, Callable
from urllib.parse import quote

from .errors import IdNotFound, InstantiationFailed, NetworkError, TemplateNotApplicable
from .executor import HttpExchange
from .jsonvalues import extract, graft, has, locate
from .readonly import ReadOnlyCandidate, ResourceGroup
from .semantics import CrudAnnotation, CrudSemantics
from .spec_model import FieldPath, OperationDesc, SchemaNode
from .values import synthesize_value

C, R, RM, U, D = (
    CrudSemantics.CREATE,
    CrudSemantics.READ,
    CrudSemantics.READ_MULTI,
    CrudSemantics.UPDATE,
    CrudSemantics.DELETE,
)


@dataclass(frozen=True)
class TemplateStep:
    semantics: CrudSemantics
    role: str
    injected: bool = False
    optional: bool = False
    verify: bool = False

    @property
    def label(self) -> str:
        return self.semantics.short + ("+f" if self.injected else "")


@dataclass(frozen=True)
class AbstractTemplate:
    name: str
    steps: tuple[TemplateStep, ...]

    def __post_init__(self):
        if sum(s.injected for s in self.steps) != 1:
            raise ValueError("a template has exactly one injected step")

    @property
    def notation(self) -> str:
        head = [s.label for s in self.steps if not s.optional]
        tail = [s.label for s in self.steps if s.optional]
        parts = head + ([f"({', '.join(tail)})?"] if tail else [])
        return "<" + ", ".join(parts) + ">"


UPDATE_INJECTION = AbstractTemplate(
    "UpdateInjection",
    (
        TemplateStep(C, "create"),
        TemplateStep(R, "read"),
        TemplateStep(U, "update", injected=True),
        TemplateStep(R, "read", verify=True),
        TemplateStep(D, "delete", optional=True),
        TemplateStep(R, "post_delete_read", optional=True),
    ),
)
CREATE_INJECTION = AbstractTemplate(
    "CreateInjection",
    (
        TemplateStep(C, "create", injected=True),
        TemplateStep(R, "read", verify=True),
        TemplateStep(D, "delete", optional=True),
        TemplateStep(R, "post_delete_read", optional=True),
    ),
)
UPDATE_INJECTION_RM = AbstractTemplate(
    "UpdateInjectionRM",
    (
        TemplateStep(RM, "rm_before"),
        TemplateStep(C, "create"),
        TemplateStep(RM, "rm_after"),
        TemplateStep(U, "update", injected=True),
        TemplateStep(R, "read", verify=True),
        TemplateStep(D, "delete", optional=True),
        TemplateStep(R, "post_delete_read", optional=True),
    ),
)
CREATE_INJECTION_RM = AbstractTemplate(
    "CreateInjectionRM",
    (
        TemplateStep(RM, "rm_before"),
        TemplateStep(C, "create", injected=True),
        TemplateStep(RM, "rm_after", verify=True),
        TemplateStep(D, "delete", optional=True),
        TemplateStep(R, "post_delete_read", optional=True),
    ),
)
TEMPLATES = {t.name: t for t in (UPDATE_INJECTION, CREATE_INJECTION, UPDATE_INJECTION_RM, CREATE_INJECTION_RM)}


@dataclass
class GenConfig:
    max_operation_attempts: int = 12
    max_template_attempts: int = 3
    rng_seed: int = 0
    request_timeout: float = 10.0

    def __post_init__(self):
        if self.max_operation_attempts < 1 or self.max_template_attempts < 1:
            raise ValueError("attempt budgets must be >= 1")

    def request_bound(self, steps: int) -> int:
        """Upper bound on requests one template instantiation may send."""
        return self.max_template_attempts * steps * self.max_operation_attempts

    @property
    def rejection_cost(self) -> int:
        """Requests spent when the API rejects every request: the first step
        is retried to its budget on each template attempt, then nothing else runs."""
        return self.max_template_attempts * self.max_operation_attempts


@dataclass
class ConcreteRequest:
    operation_id: str
    method: str
    path: str
    url: str
    path_params: dict[str, Any] = field(default_factory=dict)
    query: dict[str, Any] = field(default_factory=dict)
    headers: dict[str, str] = field(default_factory=dict)
    body: Any = None
    injected_field: tuple[FieldPath, Any] | None = None
    step_role: str = ""
    step_index: int = 0
    verify: bool = False
    id_locator: tuple[str, str] | None = None
    response_id_path: FieldPath | None = None

    def id_value(self) -> Any:
        """The resource id this request carries, if it has an id location."""
        if self.id_locator is None:
            return None
        where, name = self.id_locator
        if where == "path":
            return self.path_params.get(name)
        if where == "query":
            return self.query.get(name)
        if where == "header":
            return self.headers.get(name)
        path = FieldPath.parse(name)
        return extract(self.body, path) if has(self.body, path) else None

    def to_dict(self) -> dict:
        return {
            "operation_id": self.operation_id,
            "method": self.method,
            "path": self.path,
            "url": self.url,
            "path_params": self.path_params,
            "query": self.query,
            "headers": self.headers,
            "body": self.body,
            "injected_field": None
            if self.injected_field is None
            else {"path": str(self.injected_field[0]), "value": self.injected_field[1]},
            "step_role": self.step_role,
            "step_index": self.step_index,
            "verify": self.verify,
            "id_locator": list(self.id_locator) if self.id_locator else None,
            "response_id_path": None if self.response_id_path is None else str(self.response_id_path),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConcreteRequest":
        inj = d.get("injected_field")
        rid = d.get("response_id_path")
        loc = d.get("id_locator")
        return cls(
            d["operation_id"],
            d["method"],
            d["path"],
            d["url"],
            dict(d.get("path_params") or {}),
            dict(d.get("query") or {}),
            dict(d.get("headers") or {}),
            d.get("body"),
            None if inj is None else (FieldPath.parse(inj["path"]), inj["value"]),
            d.get("step_role", ""),
            d.get("step_index", 0),
            d.get("verify", False),
            tuple(loc) if loc else None,
            None if rid is None else FieldPath.parse(rid),
        )


@dataclass
class TestSequence:
    __test__ = False  # not a pytest class

    template: AbstractTemplate
    resource_type: str
    candidate: ReadOnlyCandidate
    requests: list[ConcreteRequest]
    exchanges: list[HttpExchange]
    resource_id_value: Any
    injection_value: Any
    second_injection_value: Any
    pre_injection_value: Any = None
    all_exchanges: list[HttpExchange] = field(default_factory=list)
    seq_id: int = 0
    run: int = 1

    @property
    def injected_index(self) -> int:
        return next(i for i, r in enumerate(self.requests) if r.injected_field is not None)

    @property
    def verify_index(self) -> int:
        return next(i for i, r in enumerate(self.requests) if r.verify)

    @property
    def create_index(self) -> int:
        return next(i for i, r in enumerate(self.requests) if r.step_role == "create")


# ------------------------------------------------------------ selection


def _accepts_object_body(op: OperationDesc) -> bool:
    schema = op.request_body_schema
    return schema is None or schema.kind == "object"


def select_operations(
    group: ResourceGroup, template: AbstractTemplate
) -> list[tuple[TemplateStep, list[tuple[OperationDesc, CrudAnnotation]]]]:
    """Candidate operations per step, fewest required inputs first.

    A read step falls back to read-multi operations when the group has no
    single-resource read. Optional steps are dropped together when any of
    them has no candidate; a mandatory step without one rejects the template.
    """
    order = {ann.operation_id: i for i, (_, ann) in enumerate(group.operations)}
    plan = []
    drop_optional = False
    for step in template.steps:
        cands = group.with_semantics(step.semantics)
        if not cands and step.semantics is R:
            cands = group.with_semantics(RM)
        if step.injected:
            cands = [(op, ann) for op, ann in cands if _accepts_object_body(op)]
        cands = sorted(cands, key=lambda c: (c[0].required_input_count(), order[c[1].operation_id]))
        if not cands:
            if step.optional:
                drop_optional = True
                continue
            raise TemplateNotApplicable(
                f"{template.name}: no {step.label} operation for resource {group.resource_type!r}"
            )
        plan.append((step, cands))
    if drop_optional:
        plan = [(s, c) for s, c in plan if not s.optional]
    return plan


def choose_templates(group: ResourceGroup) -> list[AbstractTemplate]:
    """Templates applicable to ``group``.

    The read-multi variants are used only when no create operation exposes a
    resource-id on either side, so the id has to come from a list diff.
    """
    creates = group.with_semantics(C)
    has_rm = bool(group.with_semantics(RM))
    blind = bool(creates) and all(a.resource_id_output is None and a.resource_id_input is None for _, a in creates)
    out = []
    for base, variant in ((CREATE_INJECTION, CREATE_INJECTION_RM), (UPDATE_INJECTION, UPDATE_INJECTION_RM)):
        template = variant if blind and has_rm else base
        try:
            select_operations(group, template)
        except TemplateNotApplicable:
            continue
        out.append(template)
    return out


# ------------------------------------------------------ request building


def id_locator(op: OperationDesc, ann: CrudAnnotation) -> tuple[str, str] | None:
    path = ann.resource_id_input
    if path is None:
        return None
    if len(path) == 1:
        for p in op.parameters:
            if p.name == path.segments[0]:
                return (p.location, p.name)
    if op.request_body_schema is not None:
        return ("body", str(path))
    return None


def build_body(schema: SchemaNode, name: str, rng: random.Random, documented: bool) -> Any:
    if schema.kind == "object":
        return {k: build_body(v, k, rng, documented) for k, v in schema.properties.items()}
    if schema.kind == "array":
        return [build_body(schema.items, name, rng, documented)]
    return synthesize_value(schema, name, rng, documented)


_PATH_PARAM = re.compile(r"\{([^}/]+)\}")
_SKIP_HEADERS = {"authorization", "content-type", "accept", "content-length"}


def build_request(
    op: OperationDesc,
    ann: CrudAnnotation,
    step: TemplateStep,
    step_index: int,
    *,
    resource_id: Any,
    candidate: ReadOnlyCandidate | None,
    injection_value: Any,
    rng: random.Random,
    documented: bool,
) -> ConcreteRequest:
    loc = id_locator(op, ann)
    use_id = resource_id is not None and step.role != "create" and loc is not None
    path_params: dict[str, Any] = {}
    query: dict[str, Any] = {}
    headers: dict[str, str] = {}
    for p in op.parameters:
        if use_id and (p.location, p.name) == loc:
            value = resource_id
        elif p.location == "path" or p.required:
            value = synthesize_value(p.schema, p.name, rng, documented)
        else:
            continue
        if p.location == "path":
            path_params[p.name] = value
        elif p.location == "query":
            query[p.name] = value
        elif p.location == "header" and p.name.lower() not in _SKIP_HEADERS:
            headers[p.name] = str(value)

    def fill(match: re.Match) -> str:
        name = match.group(1)
        if name not in path_params:
            path_params[name] = resource_id if resource_id is not None else synthesize_value(
                SchemaNode("string"), name, rng, False
            )
        return quote(str(path_params[name]), safe="")

    url = _PATH_PARAM.sub(fill, op.path)

    body = None
    if op.request_body_schema is not None:
        body = build_body(op.request_body_schema, "", rng, documented)
    if use_id and loc[0] == "body":
        body = graft(body, FieldPath.parse(loc[1]), resource_id)

    injected = None
    if step.injected:
        if candidate is None:
            raise ValueError("injected step without a candidate")
        if body is not None and not isinstance(body, dict):
            raise TemplateNotApplicable(f"{op.operation_id} does not take an object body")
        path = candidate.field_path.strip_wrappers()
        body = graft(body, path, injection_value)
        injected = (path, injection_value)

    return ConcreteRequest(
        operation_id=op.operation_id,
        method=op.method,
        path=op.path,
        url=url,
        path_params=path_params,
        query=query,
        headers=headers,
        body=body,
        injected_field=injected,
        step_role=step.role,
        step_index=step_index,
        verify=step.verify,
        id_locator=loc,
        response_id_path=ann.resource_id_output,
    )


# ------------------------------------------------------ resource-id threading


def _id_list(doc: Any, id_path: FieldPath | None) -> list:
    if id_path is None or not has(doc, id_path):
        return []
    ids = extract(doc, id_path)
    return ids if isinstance(ids, list) else [ids]


def thread_resource_id(
    create_response: Any,
    id_path: FieldPath | None,
    rm_before: Any = None,
    rm_after: Any = None,
    rm_id_path: FieldPath | None = None,
) -> Any:
    """Id of the freshly created resource.

    Read from the create response when it exposes the id; otherwise taken as
    the single id present in ``rm_after`` but not in ``rm_before``.
    """
    if id_path is not None and create_response is not None:
        path = id_path.strip_wrappers()
        if has(create_response, path):
            value = extract(create_response, path)
            if value is not None and not isinstance(value, (list, dict)):
                return value
    if rm_before is not None and rm_after is not None:
        before = {repr(v) for v in _id_list(rm_before, rm_id_path)}
        new = []
        for v in _id_list(rm_after, rm_id_path):
            if repr(v) not in before and v not in new:
                new.append(v)
        if len(new) == 1:
            return new[0]
        if not new:
            raise IdNotFound("read-multi lists do not differ")
        raise IdNotFound(f"ambiguous read-multi difference: {new!r}")
    raise IdNotFound("create response carries no resource-id")


def resource_of(ex: HttpExchange, resource_id: Any) -> Any:
    """The resource a read exchange returned; list responses are searched by id."""
    req = ex.request
    body = ex.response_body
    if req.response_id_path is not None and "[]" in req.response_id_path.segments:
        return locate(body, req.response_id_path, resource_id)
    if isinstance(body, list):
        return None
    return body


# ----------------------------------------------------------- instantiation

Executor = Any  # anything with .execute(ConcreteRequest) -> HttpExchange
Recorder = Callable[[HttpExchange, dict], None]


class _AttemptFailed(Exception):
    pass


def instantiate(
    template: AbstractTemplate,
    group: ResourceGroup,
    candidate: ReadOnlyCandidate,
    cfg: GenConfig,
    executor: Executor,
    rng: random.Random,
    injection_value: Any,
    second_injection_value: Any = None,
    *,
    record: Recorder | None = None,
    seq_id: int = 0,
    run: int = 1,
) -> TestSequence:
    plan = select_operations(group, template)
    all_exchanges: list[HttpExchange] = []
    sent = 0

    def send(req: ConcreteRequest, meta: dict) -> HttpExchange:
        nonlocal sent
        sent += 1
        try:
            ex = executor.execute(req)
        except NetworkError as exc:
            ex = HttpExchange.failed(req, str(exc))
        all_exchanges.append(ex)
        if record is not None:
            record(ex, {"seq_id": seq_id, "run": run, **meta})
        return ex

    for t_attempt in range(cfg.max_template_attempts):
        try:
            requests, exchanges, rid, pre = _run_once(
                plan, cfg, rng, candidate, injection_value, lambda req, meta: send(req, {"template_attempt": t_attempt, **meta})
            )
        except _AttemptFailed:
            continue
        return TestSequence(
            template=template,
            resource_type=group.resource_type,
            candidate=candidate,
            requests=requests,
            exchanges=exchanges,
            resource_id_value=rid,
            injection_value=injection_value,
            second_injection_value=second_injection_value,
            pre_injection_value=pre,
            all_exchanges=all_exchanges,
            seq_id=seq_id,
            run=run,
        )
    raise InstantiationFailed(
        f"{template.name} on {group.resource_type}.{candidate.field_name}: "
        f"budget exhausted after {cfg.max_template_attempts} template attempts",
        requests_sent=sent,
        exchanges=all_exchanges,
    )


def _run_once(plan, cfg: GenConfig, rng, candidate, injection_value, send):
    resource_id = None
    rm_before = None
    pre_value = None
    requests: list[ConcreteRequest] = []
    exchanges: list[HttpExchange] = []
    skip_optional = False

    for index, (step, cands) in enumerate(plan):
        if step.optional and skip_optional:
            continue
        if step.role == "post_delete_read":
            # checks deletion; any status is an acceptable outcome
            op, ann = cands[0]
            req = build_request(op, ann, step, index, resource_id=resource_id, candidate=candidate,
                                injection_value=injection_value, rng=rng, documented=True)
            ex = send(req, {"step": index, "op_attempt": 0})
            requests.append(req)
            exchanges.append(ex)
            continue

        done = False
        for attempt in range(cfg.max_operation_attempts):
            op, ann = cands[attempt % len(cands)]
            req = build_request(
                op, ann, step, index,
                resource_id=resource_id, candidate=candidate, injection_value=injection_value,
                rng=rng, documented=attempt < len(cands),
            )
            ex = send(req, {"step": index, "op_attempt": attempt})
            if not ex.ok:
                continue
            if step.role == "rm_before":
                rm_before = ex.response_body
            elif step.role == "create":
                try:
                    resource_id = thread_resource_id(ex.response_body, ann.resource_id_output)
                except IdNotFound:
                    resource_id = req.id_value()
                    if resource_id is None and not any(s.role == "rm_after" for s, _ in plan):
                        continue
            elif step.role == "rm_after":
                if resource_id is None:
                    try:
                        resource_id = thread_resource_id(None, None, rm_before, ex.response_body, ann.resource_id_output)
                    except IdNotFound:
                        continue
                if step.verify and resource_of(ex, resource_id) is None:
                    continue
            elif step.role == "read":
                resource = resource_of(ex, resource_id)
                if resource is None:
                    continue
                if not step.verify:
                    path = candidate.field_path.strip_wrappers()
                    if has(resource, path):
                        pre_value = extract(resource, path)
            requests.append(req)
            exchanges.append(ex)
            done = True
            break
        if not done:
            if step.optional:
                skip_optional = True
                continue
            raise _AttemptFailed(step.role)
    return requests, exchanges, resource_id, pre_value
