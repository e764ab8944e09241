"""Filter queries over a stored result document — pure reads, no I/O."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

from vts.evidence import (
    Finding,
    FindingStatus,
    Level,
    ResultDocument,
    Severity,
    owning_group,
    page_ref,
)


@dataclass(frozen=True)
class Query:
    severity: Severity | None = None
    category: str | None = None
    page: str | None = None
    level: Level | None = None
    keyword: str | None = None
    status: FindingStatus | None = None

    def __post_init__(self) -> None:
        if all(
            getattr(self, name) is None
            for name in ("severity", "category", "page", "level", "keyword", "status")
        ):
            raise ValueError("query must set at least one filter")


def query_from_params(params: Mapping[str, str]) -> Query:
    """Build a Query from CLI/HTTP string parameters (names match fields)."""
    known = {"severity", "category", "page", "level", "keyword", "status"}
    unknown = sorted(set(params) - known)
    if unknown:
        raise ValueError(f"unknown query parameter(s): {', '.join(unknown)}")
    cleaned = {k: v for k, v in params.items() if v not in (None, "")}
    return Query(
        severity=Severity(cleaned["severity"]) if "severity" in cleaned else None,
        category=cleaned.get("category"),
        page=page_ref(cleaned["page"]) if "page" in cleaned else None,
        level=Level(cleaned["level"]) if "level" in cleaned else None,
        keyword=cleaned.get("keyword"),
        status=FindingStatus(cleaned["status"]) if "status" in cleaned else None,
    )


def matches(finding: Finding, query: Query) -> bool:
    """Conjunction of all set filters."""
    if query.severity is not None and finding.severity is not query.severity:
        return False
    if query.category is not None and finding.category != query.category:
        return False
    if query.page is not None and finding.page_reference != query.page:
        return False
    if query.level is not None and finding.level is not query.level:
        return False
    if query.status is not None and finding.status is not query.status:
        return False
    if query.keyword is not None:
        needle = query.keyword.lower()
        haystacks = (finding.title, finding.description, finding.excerpt)
        if not any(needle in hay.lower() for hay in haystacks):
            return False
    return True


@dataclass(frozen=True)
class QueryHit:
    finding: Finding
    group_id: str | None


def sort_key(finding: Finding) -> tuple:
    return (-finding.severity.rank, finding.page_reference, finding.id)


def query_findings(doc: ResultDocument, query: Query) -> list[QueryHit]:
    """All micro findings matching every set filter, in triage order."""
    hits = [f for f in doc.micro_findings if matches(f, query)]
    hits.sort(key=sort_key)
    return [QueryHit(finding=f, group_id=owning_group(doc, f)) for f in hits]
