"""Canonical YAML serialization for every persisted record.

Output is byte-deterministic: schema-defined key order, sorted
collections, LF line endings, UTF-8, no line wrapping. parse(serialize)
is the identity on valid documents.
"""

from __future__ import annotations

import re
from collections.abc import Mapping, Sequence
from typing import Any

import yaml

from vts.errors import InvalidDocument, SchemaViolation
from vts.evidence import (
    ActionLever,
    BBox,
    ElementKind,
    Finding,
    FindingStatus,
    IssueGroup,
    LeverResources,
    LeverTarget,
    Level,
    PageElement,
    PageRecord,
    ProvenanceChain,
    ProvenanceHop,
    RelatedIssue,
    RepresentativeIssue,
    ResultDocument,
    Severity,
    StrategyStep,
    validate_result_document,
)

_RELATED_RE = re.compile(r"^(?P<title>.*) \(page (?P<pages>[0-9]{3}(?:, [0-9]{3})*)\)$", re.DOTALL)


class _CanonicalDumper(yaml.SafeDumper):
    """Indents sequence items under their key and never wraps lines."""

    def increase_indent(self, flow: bool = False, indentless: bool = False):
        return super().increase_indent(flow, False)


def _str_representer(dumper: yaml.SafeDumper, value: str):
    style = "|" if "\n" in value else None
    return dumper.represent_scalar("tag:yaml.org,2002:str", value, style=style)


_CanonicalDumper.add_representer(str, _str_representer)


def yaml_dump(data: Any) -> str:
    return yaml.dump(
        data,
        Dumper=_CanonicalDumper,
        sort_keys=False,
        allow_unicode=True,
        default_flow_style=False,
        width=2**16,
    )


def yaml_load(text: str) -> Any:
    return yaml.safe_load(text)


def _enum(cls, raw: Any, what: str):
    try:
        return cls(raw)
    except (ValueError, TypeError):
        allowed = ", ".join(m.value for m in cls)
        raise SchemaViolation(what, f"expected one of [{allowed}], got {raw!r}")


def _require(mapping: Mapping[str, Any], key: str, what: str) -> Any:
    if not isinstance(mapping, Mapping):
        raise SchemaViolation(what, f"expected a mapping, got {type(mapping).__name__}")
    if key not in mapping:
        raise SchemaViolation(what, f"missing key {key!r}")
    return mapping[key]


def _group_sort_key(group: IssueGroup) -> tuple[str, int]:
    match = re.match(r"^([A-Z]{2})([0-9]+)$", group.group_id)
    return (match.group(1), int(match.group(2))) if match else (group.group_id, 0)


# --- findings -----------------------------------------------------------


def finding_to_dict(finding: Finding) -> dict[str, Any]:
    data: dict[str, Any] = {
        "id": finding.id,
        "level": finding.level.value,
        "title": finding.title,
        "description": finding.description,
        "severity": finding.severity.value,
        "page_reference": finding.page_reference,
        "element_id": finding.element_id,
        "excerpt": finding.excerpt,
    }
    if finding.bbox is not None:
        data["bbox"] = finding.bbox.as_list()
    data["category"] = finding.category
    data["links"] = sorted(finding.links)
    data["status"] = finding.status.value
    return data


def finding_from_dict(data: Mapping[str, Any], what: str = "finding") -> Finding:
    bbox = data.get("bbox")
    try:
        return Finding(
            id=str(_require(data, "id", what)),
            level=_enum(Level, _require(data, "level", what), what),
            title=str(_require(data, "title", what)),
            description=str(data.get("description", "")),
            severity=_enum(Severity, _require(data, "severity", what), what),
            page_reference=str(_require(data, "page_reference", what)),
            element_id=str(_require(data, "element_id", what)),
            excerpt=str(data.get("excerpt", "")),
            bbox=_bbox_from(bbox, what) if bbox is not None else None,
            category=str(data.get("category", "")),
            links=tuple(str(x) for x in data.get("links", []) or []),
            status=_enum(FindingStatus, data.get("status", "proposed"), what),
        )
    except ValueError as exc:
        raise SchemaViolation(what, str(exc))


def _bbox_from(raw: Any, what: str) -> BBox:
    if not isinstance(raw, Sequence) or isinstance(raw, str) or len(raw) != 4:
        raise SchemaViolation(what, f"bbox must be [x0, y0, x1, y1], got {raw!r}")
    try:
        return BBox(*[float(v) for v in raw])
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(what, f"bad bbox {raw!r}: {exc}")


# --- groups -------------------------------------------------------------


def _related_to_str(related: RelatedIssue) -> str:
    return f"{related.title} (page {', '.join(related.pages)})"


def _related_from_str(raw: str, what: str) -> RelatedIssue:
    match = _RELATED_RE.match(raw)
    if not match:
        raise SchemaViolation(what, f"bad related issue entry {raw!r}")
    return RelatedIssue(title=match.group("title"), pages=tuple(match.group("pages").split(", ")))


def group_to_dict(group: IssueGroup) -> dict[str, Any]:
    rep = group.representative_issue
    return {
        "group_id": group.group_id,
        "representative_issue": {
            "title": rep.title,
            "description": rep.description,
            "severity": rep.severity.value,
            "page_reference": rep.page_reference,
            "related_issues": [_related_to_str(r) for r in rep.related_issues],
            "priority_score": group.priority_score,
        },
    }


def group_from_dict(data: Mapping[str, Any], category: str, what: str = "group") -> IssueGroup:
    rep_raw = _require(data, "representative_issue", what)
    try:
        rep = RepresentativeIssue(
            title=str(_require(rep_raw, "title", what)),
            description=str(rep_raw.get("description", "")),
            severity=_enum(Severity, _require(rep_raw, "severity", what), what),
            page_reference=str(_require(rep_raw, "page_reference", what)),
            related_issues=tuple(
                _related_from_str(str(r), what) for r in rep_raw.get("related_issues", []) or []
            ),
        )
        return IssueGroup(
            group_id=str(_require(data, "group_id", what)),
            category=category,
            representative_issue=rep,
            priority_score=int(_require(rep_raw, "priority_score", what)),
        )
    except ValueError as exc:
        raise SchemaViolation(what, str(exc))


def grouped_issues_to_dict(grouped: Mapping[str, Sequence[IssueGroup]]) -> dict[str, Any]:
    return {
        category: [group_to_dict(g) for g in sorted(grouped[category], key=_group_sort_key)]
        for category in sorted(grouped)
    }


def grouped_issues_from_dict(raw: Any, what: str = "grouped_issues") -> dict[str, tuple[IssueGroup, ...]]:
    if raw is None:
        return {}
    if not isinstance(raw, Mapping):
        raise SchemaViolation(what, "grouped_issues must be a mapping")
    return {
        str(category): tuple(
            group_from_dict(g, str(category), f"{what}.{category}") for g in groups or []
        )
        for category, groups in raw.items()
    }


# --- levers and plan ----------------------------------------------------


def lever_to_dict(lever: ActionLever) -> dict[str, Any]:
    return {
        "id": lever.id,
        "lever_name": lever.lever_name,
        "target": {
            "metric": lever.target.metric,
            "value": lever.target.value,
            "unit": lever.target.unit,
        },
        "steps": list(lever.steps),
        "resources": {
            "budget": lever.resources.budget,
            "currency": lever.resources.currency,
            "headcount": lever.resources.headcount,
        },
        "synergy_notes": lever.synergy_notes,
        "tradeoff_notes": lever.tradeoff_notes,
        "evidence_links": sorted(lever.evidence_links),
    }


def lever_from_dict(data: Mapping[str, Any], what: str = "lever") -> ActionLever:
    target_raw = _require(data, "target", what)
    resources_raw = _require(data, "resources", what)
    try:
        return ActionLever(
            id=str(_require(data, "id", what)),
            lever_name=str(_require(data, "lever_name", what)),
            target=LeverTarget(
                metric=str(_require(target_raw, "metric", what)),
                value=float(_require(target_raw, "value", what)),
                unit=str(target_raw.get("unit", "")),
            ),
            steps=tuple(str(s) for s in data.get("steps", []) or []),
            resources=LeverResources(
                budget=float(_require(resources_raw, "budget", what)),
                currency=str(resources_raw.get("currency", "")),
                headcount=int(resources_raw.get("headcount", 0)),
            ),
            synergy_notes=str(data.get("synergy_notes", "")),
            tradeoff_notes=str(data.get("tradeoff_notes", "")),
            evidence_links=tuple(str(x) for x in data.get("evidence_links", []) or []),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(what, str(exc))


def step_to_dict(step: StrategyStep) -> dict[str, Any]:
    return {
        "id": step.id,
        "initiative": step.initiative,
        "sequence_index": step.sequence_index,
        "start_quarter": step.start_quarter,
        "cashflows": list(step.cashflows),
        "discount_rate": step.discount_rate,
        "npv": step.npv,
        "risk_note": step.risk_note,
        "lever_links": sorted(step.lever_links),
    }


def step_from_dict(data: Mapping[str, Any], what: str = "step") -> StrategyStep:
    try:
        return StrategyStep(
            id=str(_require(data, "id", what)),
            initiative=str(_require(data, "initiative", what)),
            sequence_index=int(_require(data, "sequence_index", what)),
            start_quarter=int(data.get("start_quarter", 1)),
            cashflows=tuple(float(c) for c in _require(data, "cashflows", what) or []),
            discount_rate=float(_require(data, "discount_rate", what)),
            npv=float(_require(data, "npv", what)),
            risk_note=str(data.get("risk_note", "")),
            lever_links=tuple(str(x) for x in data.get("lever_links", []) or []),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(what, str(exc))


# --- provenance ---------------------------------------------------------


def _hop_to_dict(hop: ProvenanceHop) -> dict[str, Any]:
    data: dict[str, Any] = {"id": hop.id, "level": hop.level.value}
    if hop.page_reference is not None:
        data["page_reference"] = hop.page_reference
    if hop.element_id is not None:
        data["element_id"] = hop.element_id
    if hop.excerpt is not None:
        data["excerpt"] = hop.excerpt
    return data


def _hop_from_dict(data: Mapping[str, Any], what: str) -> ProvenanceHop:
    return ProvenanceHop(
        id=str(_require(data, "id", what)),
        level=_enum(Level, _require(data, "level", what), what),
        page_reference=str(data["page_reference"]) if "page_reference" in data else None,
        element_id=str(data["element_id"]) if "element_id" in data else None,
        excerpt=str(data["excerpt"]) if "excerpt" in data else None,
    )


def chain_to_dict(chain: ProvenanceChain) -> list[dict[str, Any]]:
    return [_hop_to_dict(h) for h in chain.hops]


def provenance_to_dict(provenance: Mapping[str, ProvenanceChain]) -> dict[str, Any]:
    return {key: [_hop_to_dict(h) for h in provenance[key].hops] for key in sorted(provenance)}


def provenance_from_dict(raw: Any, what: str = "provenance") -> dict[str, ProvenanceChain]:
    if raw is None:
        return {}
    if not isinstance(raw, Mapping):
        raise SchemaViolation(what, "provenance must be a mapping")
    out = {}
    for key, hops in raw.items():
        if not hops:
            raise SchemaViolation(what, f"empty chain for {key}")
        out[str(key)] = ProvenanceChain(tuple(_hop_from_dict(h, f"{what}.{key}") for h in hops))
    return out


# --- result document ----------------------------------------------------


def document_to_dict(doc: ResultDocument) -> dict[str, Any]:
    return {
        "source": doc.source,
        "generated_at": doc.generated_at,
        "micro_findings": [
            finding_to_dict(f) for f in sorted(doc.micro_findings, key=lambda f: f.id)
        ],
        "grouped_issues": grouped_issues_to_dict(doc.grouped_issues),
        "meso_levers": [lever_to_dict(lv) for lv in sorted(doc.meso_levers, key=lambda lv: lv.id)],
        "macro_plan": [
            step_to_dict(st) for st in sorted(doc.macro_plan, key=lambda st: st.sequence_index)
        ],
        "provenance": provenance_to_dict(doc.provenance),
    }


def document_from_dict(data: Mapping[str, Any], what: str = "result") -> ResultDocument:
    if not isinstance(data, Mapping):
        raise SchemaViolation(what, "document root must be a mapping")
    return ResultDocument(
        source=str(_require(data, "source", what)),
        generated_at=str(_require(data, "generated_at", what)),
        micro_findings=tuple(
            finding_from_dict(f, f"{what}.micro_findings") for f in data.get("micro_findings", []) or []
        ),
        grouped_issues=grouped_issues_from_dict(data.get("grouped_issues"), f"{what}.grouped_issues"),
        meso_levers=tuple(
            lever_from_dict(lv, f"{what}.meso_levers") for lv in data.get("meso_levers", []) or []
        ),
        macro_plan=tuple(
            step_from_dict(st, f"{what}.macro_plan") for st in data.get("macro_plan", []) or []
        ),
        provenance=provenance_from_dict(data.get("provenance"), f"{what}.provenance"),
    )


def canonical_serialize(doc: ResultDocument) -> str:
    """Serialize a structurally valid document to canonical YAML.

    Refused (InvalidDocument) when document-internal validation fails;
    anchor checks against a corpus are the caller's concern.
    """
    report = validate_result_document(doc, corpus=None)
    if not report.ok:
        raise InvalidDocument(report)
    return yaml_dump(document_to_dict(doc))


def parse_result_document(text: str, what: str = "result") -> ResultDocument:
    try:
        data = yaml_load(text)
    except yaml.YAMLError as exc:
        raise SchemaViolation(what, f"not valid YAML: {exc}")
    return document_from_dict(data, what)


# --- page records -------------------------------------------------------


def element_to_dict(element: PageElement) -> dict[str, Any]:
    data: dict[str, Any] = {
        "id": element.id,
        "kind": element.kind.value,
        "bbox": element.bbox.as_list(),
    }
    if element.kind is ElementKind.TEXT:
        data["content"] = element.content
    elif element.kind is ElementKind.TABLE:
        data["csv"] = element.csv
    else:
        data["caption"] = element.caption
    return data


def element_from_dict(data: Mapping[str, Any], what: str = "element") -> PageElement:
    kind = _enum(ElementKind, _require(data, "kind", what), what)
    payload_key = {"text": "content", "table": "csv", "figure": "caption"}[kind.value]
    try:
        return PageElement(
            id=str(_require(data, "id", what)),
            kind=kind,
            bbox=_bbox_from(_require(data, "bbox", what), what),
            **{payload_key: str(_require(data, payload_key, what))},
        )
    except ValueError as exc:
        raise SchemaViolation(what, str(exc))


def page_record_to_yaml(record: PageRecord) -> str:
    return yaml_dump(
        {
            "page": record.page,
            "source": record.source,
            "dpi": record.dpi,
            "elements": [element_to_dict(el) for el in record.elements],
        }
    )


def page_record_from_dict(data: Mapping[str, Any], what: str = "page") -> PageRecord:
    try:
        return PageRecord(
            page=str(_require(data, "page", what)),
            source=str(_require(data, "source", what)),
            dpi=int(_require(data, "dpi", what)),
            elements=tuple(
                element_from_dict(el, f"{what}.elements") for el in data.get("elements", []) or []
            ),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(what, str(exc))


def page_record_from_yaml(text: str, what: str = "page") -> PageRecord:
    try:
        data = yaml_load(text)
    except yaml.YAMLError as exc:
        raise SchemaViolation(what, f"not valid YAML: {exc}")
    if not isinstance(data, Mapping):
        raise SchemaViolation(what, "page record must be a mapping")
    return page_record_from_dict(data, what)
