"""The three reasoning tiers: micro (per-page issues), meso (action
levers), macro (portfolio strategy).

Each tier renders a structured prompt, calls the provider once per unit
of work, parses the YAML reply, and pushes every record through evidence
validation. A unit whose reply is malformed or invalid is re-asked once
with the violation list; records that still fail land in ``rejected``
for audit, never in ``records``.
"""

from __future__ import annotations

import math
import re
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import yaml

from vts import canonical
from vts.config import OrgConfig
from vts.errors import MalformedResponse, MissingPlaceholder, ObserverFailed, SchemaViolation
from vts.evidence import (
    ActionLever,
    BBox,
    CorpusIndex,
    Finding,
    IssueGroup,
    Level,
    LeverResources,
    LeverTarget,
    PageRecord,
    ResultDocument,
    Severity,
    StrategyStep,
    page_ref,
    validate_finding,
)
from vts.npv import DEFAULT_DISCOUNT_RATE, compute_npv  # noqa: F401  (re-exported)
from vts.providers import ModelRequest, ProviderSession, ResponseFormat

VTS_PHRASES = (
    "Describe what you notice",
    "Cite what makes you conclude this",
    "State additional possibilities",
)

VTS_QUESTIONS = (
    "What business patterns/issues do you observe?",
    "What specific data supports this observation?",
    "What additional relationships or insights emerge?",
)

PACKAGED_PROMPTS_DIR = Path(__file__).parent / "prompts"

_TEMPLATE_SPLIT = "\n---\n"
_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")

_RETRY_HEADER = "\n\nYour previous reply failed validation:\n"
_RETRY_FOOTER = "\nRespond again with corrected YAML in the same shape."


@dataclass(frozen=True)
class VtsPromptTemplate:
    level: str
    system_text: str
    user_template: str
    required_questions: tuple[str, ...] = VTS_QUESTIONS

    def __post_init__(self) -> None:
        combined = self.system_text + self.user_template
        for phrase in VTS_PHRASES:
            if phrase not in combined:
                raise ValueError(f"{self.level} template lost required phrase {phrase!r}")
        for question in self.required_questions:
            if question not in combined:
                raise ValueError(f"{self.level} template lost required question {question!r}")


def load_template(level: str, prompts_dir: str | Path | None = None) -> VtsPromptTemplate:
    directory = Path(prompts_dir) if prompts_dir else PACKAGED_PROMPTS_DIR
    path = directory / f"{level}.txt"
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MissingPlaceholder(f"prompt template {path}: {exc}")
    if _TEMPLATE_SPLIT not in text:
        raise SchemaViolation(str(path), "template must contain a `---` separator line")
    system_text, user_template = text.split(_TEMPLATE_SPLIT, 1)
    return VtsPromptTemplate(
        level=level, system_text=system_text.strip(), user_template=user_template.strip()
    )


def render_prompt(template: VtsPromptTemplate, context: Mapping[str, str]) -> tuple[str, str]:
    """Fill the template's placeholders; every placeholder must be supplied."""
    needed = set(_PLACEHOLDER_RE.findall(template.user_template))
    missing = sorted(needed - set(context))
    if missing:
        raise MissingPlaceholder(", ".join(missing))
    user = template.user_template
    for name in needed:
        user = user.replace("{" + name + "}", str(context[name]))
    return template.system_text, user


@dataclass(frozen=True)
class RejectedRecord:
    record: Any
    violations: tuple[str, ...]


@dataclass(frozen=True)
class ObserverOutput:
    level: Level
    records: tuple = ()
    rejected: tuple[RejectedRecord, ...] = ()


_RECORDS_KEY = {Level.MICRO: "findings", Level.MESO: "levers", Level.MACRO: "steps"}


def observer_output_to_dict(output: ObserverOutput) -> dict[str, Any]:
    if output.level is Level.MICRO:
        records = [canonical.finding_to_dict(f) for f in output.records]
    elif output.level is Level.MESO:
        records = [canonical.lever_to_dict(lv) for lv in output.records]
    else:
        records = [canonical.step_to_dict(st) for st in output.records]
    return {
        "level": output.level.value,
        _RECORDS_KEY[output.level]: records,
        "rejected": [
            {"record": rej.record, "violations": list(rej.violations)} for rej in output.rejected
        ],
    }


def observer_output_to_yaml(output: ObserverOutput) -> str:
    return canonical.yaml_dump(observer_output_to_dict(output))


def observer_output_from_dict(data: Mapping[str, Any], what: str = "observer") -> ObserverOutput:
    if not isinstance(data, Mapping) or "level" not in data:
        raise SchemaViolation(what, "observer output must be a mapping with `level`")
    try:
        level = Level(data["level"])
    except ValueError:
        raise SchemaViolation(what, f"unknown level {data['level']!r}")
    raw_records = data.get(_RECORDS_KEY[level]) or []
    if level is Level.MICRO:
        records = tuple(canonical.finding_from_dict(r, what) for r in raw_records)
    elif level is Level.MESO:
        records = tuple(canonical.lever_from_dict(r, what) for r in raw_records)
    else:
        records = tuple(canonical.step_from_dict(r, what) for r in raw_records)
    rejected = tuple(
        RejectedRecord(
            record=entry.get("record"),
            violations=tuple(str(v) for v in entry.get("violations", []) or []),
        )
        for entry in data.get("rejected") or []
    )
    return ObserverOutput(level=level, records=records, rejected=rejected)


def observer_output_from_yaml(text: str, what: str = "observer") -> ObserverOutput:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaViolation(what, f"not valid YAML: {exc}")
    return observer_output_from_dict(data, what)


# --- shared parsing helpers ---------------------------------------------


def _parse_yaml_mapping(text: str, key: str, what: str) -> list:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise MalformedResponse(f"{what}: not valid YAML: {exc}")
    if not isinstance(data, Mapping) or key not in data:
        raise MalformedResponse(f"{what}: expected a mapping with a `{key}` list")
    value = data[key] or []
    if not isinstance(value, Sequence) or isinstance(value, str):
        raise MalformedResponse(f"{what}: `{key}` must be a list")
    return list(value)


def _feedback(problems: Sequence[str]) -> str:
    bullets = "\n".join(f"- {problem}" for problem in problems)
    return _RETRY_HEADER + bullets + _RETRY_FOOTER


def findings_listing(findings: Sequence[Finding]) -> str:
    """Compact deterministic listing of findings used inside prompts.

    Deliberately excludes review status so a curated set with unchanged
    membership renders the identical prompt.
    """
    return canonical.yaml_dump(
        [
            {
                "id": f.id,
                "title": f.title,
                "description": f.description,
                "severity": f.severity.value,
                "page_reference": f.page_reference,
                "excerpt": f.excerpt,
            }
            for f in sorted(findings, key=lambda f: f.id)
        ]
    )


def org_listing(org: OrgConfig) -> str:
    return canonical.yaml_dump(
        {
            "name": org.name,
            "levers": list(org.levers),
            "budget_envelope": org.budget_envelope,
            "headcount_cap": org.headcount_cap,
            "currency": org.currency,
        }
    )


# --- micro tier ---------------------------------------------------------


def _finding_from_response(
    raw: Any, ref: str, ordinal: int, corpus: CorpusIndex
) -> tuple[Finding | None, list[str]]:
    finding_id = f"f{ref}-{ordinal:02d}"
    if not isinstance(raw, Mapping):
        return None, [f"{finding_id}: not-a-mapping"]
    problems = []
    for key in ("title", "severity", "page_reference", "element_id", "excerpt"):
        if not raw.get(key):
            problems.append(f"{finding_id}: missing-{key}")
    severity_raw = raw.get("severity")
    if severity_raw is not None and severity_raw not in {s.value for s in Severity}:
        problems.append(f"{finding_id}: bad-severity {severity_raw!r}")
    if problems:
        return None, problems
    bbox_raw = raw.get("bbox")
    bbox = None
    if bbox_raw is not None:
        if (
            isinstance(bbox_raw, Sequence)
            and not isinstance(bbox_raw, str)
            and len(bbox_raw) == 4
        ):
            try:
                bbox = BBox(*[float(v) for v in bbox_raw])
            except (TypeError, ValueError):
                return None, [f"{finding_id}: bad-bbox {bbox_raw!r}"]
        else:
            return None, [f"{finding_id}: bad-bbox {bbox_raw!r}"]
    try:
        finding = Finding(
            id=finding_id,
            level=Level.MICRO,
            title=str(raw["title"]),
            description=str(raw.get("description", "")),
            severity=Severity(severity_raw),
            page_reference=page_ref(raw["page_reference"]),
            element_id=str(raw["element_id"]),
            excerpt=str(raw["excerpt"]),
            bbox=bbox,
        )
    except ValueError as exc:
        return None, [f"{finding_id}: {exc}"]
    report = validate_finding(finding, corpus)
    if not report.ok:
        return None, [f"{finding_id}: {code}" for code in report.codes()]
    return finding, []


def _micro_page_request(
    template: VtsPromptTemplate, page: PageRecord, model: str, note: str = ""
) -> ModelRequest:
    system, user = render_prompt(
        template,
        {"page": page.page, "page_yaml": canonical.page_record_to_yaml(page)},
    )
    return ModelRequest(
        model=model,
        system_prompt=system,
        user_prompt=user + note,
        response_format=ResponseFormat.YAML,
        max_output_tokens=4096,
    )


def _run_micro_page(
    template: VtsPromptTemplate,
    page: PageRecord,
    corpus: CorpusIndex,
    session: ProviderSession,
) -> tuple[list[Finding], list[RejectedRecord]]:
    if not page.elements:
        return [], []
    note = ""
    last: tuple[list[Finding], list[RejectedRecord]] | None = None
    last_malformed = ""
    for attempt in range(2):
        try:
            response = session.complete(_micro_page_request(template, page, session.model, note))
            raw_findings = _parse_yaml_mapping(response.text, "findings", f"page {page.page}")
        except MalformedResponse as exc:
            last_malformed = str(exc)
            note = _feedback([last_malformed])
            last = None
            continue
        accepted, rejects, problems = [], [], []
        for ordinal, raw in enumerate(raw_findings, start=1):
            finding, finding_problems = _finding_from_response(raw, page.page, ordinal, corpus)
            if finding is not None:
                accepted.append(finding)
            else:
                rejects.append(
                    RejectedRecord(record=raw, violations=tuple(finding_problems))
                )
                problems.extend(finding_problems)
        if not problems:
            return accepted, []
        last = (accepted, rejects)
        note = _feedback(problems)
    if last is None:
        raise ObserverFailed(f"micro page {page.page}", last_malformed)
    return last


def _link_request(
    template: VtsPromptTemplate, findings: Sequence[Finding], model: str, note: str = ""
) -> ModelRequest:
    system, user = render_prompt(template, {"findings_yaml": findings_listing(findings)})
    return ModelRequest(
        model=model,
        system_prompt=system,
        user_prompt=user + note,
        response_format=ResponseFormat.YAML,
        max_output_tokens=2048,
    )


def _apply_links(
    findings: Sequence[Finding], raw_links: Sequence[Any]
) -> tuple[list[Finding], list[RejectedRecord]]:
    known = {f.id for f in findings}
    neighbors: dict[str, set[str]] = {f.id: set() for f in findings}
    rejects = []
    for raw in raw_links:
        if (
            not isinstance(raw, Sequence)
            or isinstance(raw, str)
            or len(raw) != 2
        ):
            rejects.append(RejectedRecord(record=raw, violations=("bad-link-shape",)))
            continue
        a, b = str(raw[0]), str(raw[1])
        if a == b:
            rejects.append(RejectedRecord(record=raw, violations=("self-link",)))
            continue
        if a not in known or b not in known:
            rejects.append(RejectedRecord(record=raw, violations=("dangling-link",)))
            continue
        neighbors[a].add(b)
        neighbors[b].add(a)
    linked = [replace(f, links=tuple(sorted(neighbors[f.id]))) for f in findings]
    return linked, rejects


def run_micro(
    pages: Sequence[PageRecord],
    session: ProviderSession,
    prompts_dir: str | Path | None = None,
    parallelism: int = 1,
) -> ObserverOutput:
    """One provider call per non-empty page, then a cross-page linking pass."""
    template = load_template("micro", prompts_dir)
    corpus = CorpusIndex(pages)
    ordered = sorted(pages, key=lambda p: p.page)

    if parallelism > 1 and len(ordered) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            per_page = list(
                pool.map(lambda p: _run_micro_page(template, p, corpus, session), ordered)
            )
    else:
        per_page = [_run_micro_page(template, p, corpus, session) for p in ordered]

    findings: list[Finding] = []
    rejected: list[RejectedRecord] = []
    for page_findings, page_rejects in per_page:
        findings.extend(page_findings)
        rejected.extend(page_rejects)

    if findings:
        link_template = load_template("link", prompts_dir)
        note = ""
        raw_links: list[Any] | None = None
        last_malformed = ""
        for attempt in range(2):
            try:
                response = session.complete(
                    _link_request(link_template, findings, session.model, note)
                )
                raw_links = _parse_yaml_mapping(response.text, "links", "link pass")
                break
            except MalformedResponse as exc:
                last_malformed = str(exc)
                note = _feedback([last_malformed])
        if raw_links is None:
            raise ObserverFailed("link", last_malformed)
        findings, link_rejects = _apply_links(findings, raw_links)
        rejected.extend(link_rejects)

    return ObserverOutput(level=Level.MICRO, records=tuple(findings), rejected=tuple(rejected))


# --- meso tier ----------------------------------------------------------


def _lever_from_response(
    raw: Any,
    ordinal: int,
    vocabulary: Sequence[str],
    finding_ids: frozenset[str],
) -> tuple[ActionLever | None, list[str]]:
    lever_id = f"lv{ordinal:02d}"
    if not isinstance(raw, Mapping):
        return None, [f"{lever_id}: not-a-mapping"]
    problems = []
    lever_name = str(raw.get("lever_name", ""))
    if not lever_name:
        problems.append(f"{lever_id}: missing-lever_name")
    elif lever_name.lower() not in {v.lower() for v in vocabulary}:
        problems.append(f"{lever_id}: unknown-lever {lever_name!r}")
    links = [str(x) for x in raw.get("evidence_links") or []]
    if not links:
        problems.append(f"{lever_id}: empty-evidence")
    else:
        for link in links:
            if link not in finding_ids:
                problems.append(f"{lever_id}: dangling-link {link}")
    target_raw = raw.get("target")
    if not isinstance(target_raw, Mapping):
        problems.append(f"{lever_id}: missing-target")
    if problems:
        return None, problems
    try:
        value = float(target_raw.get("value"))
    except (TypeError, ValueError):
        return None, [f"{lever_id}: bad-target-value {target_raw.get('value')!r}"]
    if not math.isfinite(value):
        return None, [f"{lever_id}: non-finite-target"]
    resources_raw = raw.get("resources") or {}
    if not isinstance(resources_raw, Mapping):
        return None, [f"{lever_id}: bad-resources"]
    try:
        lever = ActionLever(
            id=lever_id,
            lever_name=lever_name,
            target=LeverTarget(
                metric=str(target_raw.get("metric", "")),
                value=value,
                unit=str(target_raw.get("unit", "")),
            ),
            steps=tuple(str(s) for s in raw.get("steps") or []),
            resources=LeverResources(
                budget=float(resources_raw.get("budget", 0.0)),
                currency=str(resources_raw.get("currency", "")),
                headcount=int(resources_raw.get("headcount", 0)),
            ),
            synergy_notes=str(raw.get("synergy_notes", "")),
            tradeoff_notes=str(raw.get("tradeoff_notes", "")),
            evidence_links=tuple(links),
        )
    except (TypeError, ValueError) as exc:
        return None, [f"{lever_id}: {exc}"]
    return lever, []


def run_meso(
    groups: Mapping[str, Sequence[IssueGroup]],
    findings: Sequence[Finding],
    org: OrgConfig,
    session: ProviderSession,
    prompts_dir: str | Path | None = None,
) -> ObserverOutput:
    """Map grouped issues to controllable levers, evidence-linked to findings."""
    if not groups or not any(groups.values()):
        raise ValueError("run_meso requires at least one issue group")
    template = load_template("meso", prompts_dir)
    context = {
        "groups_yaml": canonical.yaml_dump(canonical.grouped_issues_to_dict(groups)),
        "findings_yaml": findings_listing(findings),
        "org_yaml": org_listing(org),
    }
    finding_ids = frozenset(f.id for f in findings)
    vocabulary = org.levers

    note = ""
    last: tuple[list[ActionLever], list[RejectedRecord]] | None = None
    last_malformed = ""
    for attempt in range(2):
        system, user = render_prompt(template, context)
        request = ModelRequest(
            model=session.model,
            system_prompt=system,
            user_prompt=user + note,
            response_format=ResponseFormat.YAML,
            max_output_tokens=4096,
        )
        try:
            response = session.complete(request)
            raw_levers = _parse_yaml_mapping(response.text, "levers", "meso")
        except MalformedResponse as exc:
            last_malformed = str(exc)
            note = _feedback([last_malformed])
            last = None
            continue
        accepted, rejects, problems = [], [], []
        for ordinal, raw in enumerate(raw_levers, start=1):
            lever, lever_problems = _lever_from_response(raw, ordinal, vocabulary, finding_ids)
            if lever is not None:
                accepted.append(lever)
            else:
                rejects.append(RejectedRecord(record=raw, violations=tuple(lever_problems)))
                problems.extend(lever_problems)
        if not problems:
            return ObserverOutput(level=Level.MESO, records=tuple(accepted))
        last = (accepted, rejects)
        note = _feedback(problems)
    if last is None:
        raise ObserverFailed("meso", last_malformed)
    accepted, rejects = last
    return ObserverOutput(level=Level.MESO, records=tuple(accepted), rejected=tuple(rejects))


# --- macro tier ---------------------------------------------------------


def _step_from_response(
    raw: Any, ordinal: int, lever_ids: frozenset[str], discount_rate: float
) -> tuple[StrategyStep | None, list[str]]:
    step_id = f"st{ordinal:02d}"
    if not isinstance(raw, Mapping):
        return None, [f"{step_id}: not-a-mapping"]
    problems = []
    cashflows_raw = raw.get("cashflows")
    cashflows: tuple[float, ...] = ()
    if not cashflows_raw:
        problems.append(f"{step_id}: empty-cashflows")
    else:
        try:
            cashflows = tuple(float(c) for c in cashflows_raw)
        except (TypeError, ValueError):
            problems.append(f"{step_id}: bad-cashflows {cashflows_raw!r}")
        else:
            if not all(math.isfinite(c) for c in cashflows):
                problems.append(f"{step_id}: non-finite-cashflow")
    links = [str(x) for x in raw.get("lever_links") or []]
    if not links:
        problems.append(f"{step_id}: empty-links")
    else:
        for link in links:
            if link not in lever_ids:
                problems.append(f"{step_id}: dangling-link {link}")
    try:
        sequence_index = int(raw.get("sequence_index"))
    except (TypeError, ValueError):
        problems.append(f"{step_id}: bad-sequence {raw.get('sequence_index')!r}")
        sequence_index = 0
    else:
        if sequence_index < 1:
            problems.append(f"{step_id}: bad-sequence {sequence_index}")
    if problems:
        return None, problems
    try:
        step = StrategyStep(
            id=step_id,
            initiative=str(raw.get("initiative", "")),
            sequence_index=sequence_index,
            start_quarter=int(raw.get("start_quarter", 1)),
            cashflows=cashflows,
            discount_rate=discount_rate,
            npv=compute_npv(cashflows, discount_rate),
            risk_note=str(raw.get("risk_note", "")),
            lever_links=tuple(links),
        )
    except (TypeError, ValueError) as exc:
        return None, [f"{step_id}: {exc}"]
    return step, []


def _resequence(steps: Sequence[StrategyStep]) -> tuple[StrategyStep, ...]:
    ordered = sorted(enumerate(steps), key=lambda item: (item[1].sequence_index, item[0]))
    return tuple(
        step if step.sequence_index == new_index else replace(step, sequence_index=new_index)
        for new_index, (_, step) in enumerate(ordered, start=1)
    )


def run_macro(
    levers: Sequence[ActionLever],
    history: Sequence[ResultDocument],
    org: OrgConfig,
    session: ProviderSession,
    discount_rate: float = DEFAULT_DISCOUNT_RATE,
    prompts_dir: str | Path | None = None,
) -> ObserverOutput:
    """Sequence levers into strategy steps; NPV is always computed locally."""
    if not levers:
        raise ValueError("run_macro requires at least one lever")
    template = load_template("macro", prompts_dir)
    context = {
        "levers_yaml": canonical.yaml_dump(
            [canonical.lever_to_dict(lv) for lv in sorted(levers, key=lambda lv: lv.id)]
        ),
        "history_yaml": canonical.yaml_dump(
            [canonical.document_to_dict(doc) for doc in history]
        ),
        "org_yaml": org_listing(org),
        "discount_rate": str(discount_rate),
    }
    lever_ids = frozenset(lv.id for lv in levers)

    note = ""
    last: tuple[list[StrategyStep], list[RejectedRecord]] | None = None
    last_malformed = ""
    for attempt in range(2):
        system, user = render_prompt(template, context)
        request = ModelRequest(
            model=session.model,
            system_prompt=system,
            user_prompt=user + note,
            response_format=ResponseFormat.YAML,
            max_output_tokens=4096,
        )
        try:
            response = session.complete(request)
            raw_steps = _parse_yaml_mapping(response.text, "steps", "macro")
        except MalformedResponse as exc:
            last_malformed = str(exc)
            note = _feedback([last_malformed])
            last = None
            continue
        accepted, rejects, problems = [], [], []
        for ordinal, raw in enumerate(raw_steps, start=1):
            step, step_problems = _step_from_response(raw, ordinal, lever_ids, discount_rate)
            if step is not None:
                accepted.append(step)
            else:
                rejects.append(RejectedRecord(record=raw, violations=tuple(step_problems)))
                problems.extend(step_problems)
        if not problems:
            return ObserverOutput(level=Level.MACRO, records=_resequence(accepted))
        last = (accepted, rejects)
        note = _feedback(problems)
    if last is None:
        raise ObserverFailed("macro", last_malformed)
    accepted, rejects = last
    return ObserverOutput(
        level=Level.MACRO, records=_resequence(accepted), rejected=tuple(rejects)
    )
