"""Clustering of micro findings into per-category issue groups.

Category assignment is keyword counting over title+description; within a
category, findings connected by their cross-page links form one group.
Everything is deterministic: permuting the input changes nothing.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, replace
from pathlib import Path

import yaml

from vts.errors import SchemaViolation
from vts.evidence import (
    Finding,
    IssueGroup,
    RelatedIssue,
    RepresentativeIssue,
    Severity,
)

OTHER_CATEGORY = "Other"

_SEVERITY_BASE = {Severity.HIGH: 7, Severity.MEDIUM: 4, Severity.LOW: 1}


@dataclass(frozen=True)
class TaxonomyCategory:
    name: str
    keywords: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("category name must be non-empty")
        bad = [kw for kw in self.keywords if not kw or kw != kw.lower()]
        if bad:
            raise ValueError(f"keywords must be non-empty lowercase: {bad}")


@dataclass(frozen=True)
class CategoryTaxonomy:
    categories: tuple[TaxonomyCategory, ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.categories]
        if len(names) != len(set(names)):
            raise ValueError("category names must be unique")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.categories)


DEFAULT_TAXONOMY = CategoryTaxonomy(
    (
        TaxonomyCategory(
            "Profit/Financial Performance",
            (
                "profit",
                "margin",
                "revenue",
                "loss",
                "ebitda",
                "interest",
                "tax",
                "cost",
                "capital",
                "cash",
                "pricing",
            ),
        ),
        TaxonomyCategory(
            "Performance/Operations",
            (
                "performance",
                "operations",
                "market",
                "score",
                "offering",
                "technology",
                "quality",
                "delivery",
                "segment",
            ),
        ),
        TaxonomyCategory(
            "Employee Satisfaction",
            (
                "employee",
                "satisfaction",
                "staffing",
                "workload",
                "morale",
                "headcount",
                "attrition",
            ),
        ),
    )
)


def load_taxonomy(path: str | Path) -> CategoryTaxonomy:
    """Read `taxonomy.yaml`: categories: [{name, keywords: []}]."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise SchemaViolation(str(path), f"unreadable: {exc}")
    except yaml.YAMLError as exc:
        raise SchemaViolation(str(path), f"not valid YAML: {exc}")
    if not isinstance(raw, Mapping) or not isinstance(raw.get("categories"), list):
        raise SchemaViolation(str(path), "expected a mapping with a `categories` list")
    categories = []
    for entry in raw["categories"]:
        if not isinstance(entry, Mapping) or "name" not in entry:
            raise SchemaViolation(str(path), f"bad category entry {entry!r}")
        keywords = tuple(str(kw).lower() for kw in entry.get("keywords", []) or [])
        try:
            categories.append(TaxonomyCategory(name=str(entry["name"]), keywords=keywords))
        except ValueError as exc:
            raise SchemaViolation(str(path), str(exc))
    try:
        return CategoryTaxonomy(tuple(categories))
    except ValueError as exc:
        raise SchemaViolation(str(path), str(exc))


def categorize(finding: Finding, taxonomy: CategoryTaxonomy = DEFAULT_TAXONOMY) -> str:
    """Category with the most keyword hits; ties go to taxonomy order."""
    text = f"{finding.title} {finding.description}".lower()
    best_name = OTHER_CATEGORY
    best_count = 0
    for category in taxonomy.categories:
        count = sum(1 for keyword in category.keywords if keyword in text)
        if count > best_count:
            best_name, best_count = category.name, count
    return best_name


def assign_group_id(category: str, ordinal: int) -> str:
    """Two uppercase letters from the category name plus the ordinal."""
    if not category:
        raise ValueError("category must be non-empty")
    if ordinal < 1:
        raise ValueError("ordinal must be >= 1")
    tokens = [token for token in category.replace("/", " ").split() if token]
    letters = ""
    if len(tokens) >= 2:
        for token in tokens[:2]:
            letters += _first_letter(token)
    else:
        alpha = [ch for ch in tokens[0] if ch.isalpha()]
        letters = "".join(alpha[:2]).upper()
    letters = (letters + "XX")[:2].upper()
    return f"{letters}{ordinal}"


def _first_letter(token: str) -> str:
    for ch in token:
        if ch.isalpha():
            return ch.upper()
    return "X"


def compute_priority_score(severity: Severity, related_count: int) -> int:
    """clamp(base + min(3, related_count // 5), 1, 10); base 7/4/1."""
    if related_count < 0:
        raise ValueError("related_count must be >= 0")
    score = _SEVERITY_BASE[severity] + min(3, related_count // 5)
    return max(1, min(10, score))


def _representative_order(finding: Finding) -> tuple:
    return (-finding.severity.rank, finding.page_reference, finding.title)


def connected_components(
    ids: Sequence[str], edges: Iterable[tuple[str, str]]
) -> list[list[str]]:
    """Deterministic connected components; each sorted, list sorted by head."""
    parent = {node: node for node in ids}

    def find(node: str) -> str:
        root = node
        while parent[root] != root:
            root = parent[root]
        while parent[node] != root:
            parent[node], node = root, parent[node]
        return root

    for a, b in edges:
        if a in parent and b in parent:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    buckets: dict[str, list[str]] = {}
    for node in ids:
        buckets.setdefault(find(node), []).append(node)
    return sorted((sorted(members) for members in buckets.values()), key=lambda c: c[0])


def partition_findings(
    findings: Sequence[Finding], taxonomy: CategoryTaxonomy = DEFAULT_TAXONOMY
) -> dict[str, list[list[Finding]]]:
    """Category → list of link-connected components (the raw partition)."""
    by_id = {f.id: f for f in findings}
    categories: dict[str, list[Finding]] = {}
    assignment = {f.id: categorize(f, taxonomy) for f in findings}
    for finding in findings:
        categories.setdefault(assignment[finding.id], []).append(finding)

    ordered_names = [name for name in (*taxonomy.names, OTHER_CATEGORY) if name in categories]
    # A category not in the taxonomy can only arise from prior assignment;
    # categorize() never produces one.
    partition: dict[str, list[list[Finding]]] = {}
    for name in ordered_names:
        members = categories[name]
        member_ids = sorted(f.id for f in members)
        edges = []
        for finding in members:
            for other in finding.links:
                if other in by_id and assignment.get(other) == name:
                    edges.append((finding.id, other))
        components = connected_components(member_ids, edges)
        partition[name] = [[by_id[i] for i in component] for component in components]
    return partition


@dataclass(frozen=True)
class GroupingResult:
    groups: Mapping[str, tuple[IssueGroup, ...]]
    findings: tuple[Finding, ...]
    membership: Mapping[str, tuple[str, ...]]

    def all_groups(self) -> list[IssueGroup]:
        return [group for groups in self.groups.values() for group in groups]


def _related_issues(members: Sequence[Finding], representative: Finding) -> tuple[RelatedIssue, ...]:
    rest = [f for f in members if f.id != representative.id]
    by_title: dict[str, set[str]] = {}
    for finding in rest:
        by_title.setdefault(finding.title, set()).add(finding.page_reference)
    entries = [
        RelatedIssue(title=title, pages=tuple(sorted(pages)))
        for title, pages in by_title.items()
    ]
    entries.sort(key=lambda r: (r.pages[0], r.title))
    return tuple(entries)


def group_findings(
    findings: Sequence[Finding], taxonomy: CategoryTaxonomy = DEFAULT_TAXONOMY
) -> GroupingResult:
    """Cluster findings into IssueGroups, assigning ids and priorities.

    Group ordinals count per two-letter prefix across the whole document
    so ids stay unique even when category initials collide.
    """
    partition = partition_findings(findings, taxonomy)
    groups: dict[str, tuple[IssueGroup, ...]] = {}
    categorized: dict[str, Finding] = {}
    membership: dict[str, tuple[str, ...]] = {}
    prefix_counter: dict[str, int] = {}

    for category, components in partition.items():
        components = sorted(
            components, key=lambda members: _representative_order(min(members, key=_representative_order))
        )
        built = []
        for members in components:
            representative = min(members, key=_representative_order)
            prefix = assign_group_id(category, 1)[:2]
            ordinal = prefix_counter.get(prefix, 0) + 1
            prefix_counter[prefix] = ordinal
            group_id = assign_group_id(category, ordinal)
            related = _related_issues(members, representative)
            group = IssueGroup(
                group_id=group_id,
                category=category,
                representative_issue=RepresentativeIssue(
                    title=representative.title,
                    description=representative.description,
                    severity=representative.severity,
                    page_reference=representative.page_reference,
                    related_issues=related,
                ),
                priority_score=compute_priority_score(
                    representative.severity, len(members) - 1
                ),
            )
            built.append(group)
            membership[group_id] = tuple(sorted(f.id for f in members))
            for finding in members:
                categorized[finding.id] = replace(finding, category=category)
        groups[category] = tuple(built)

    ordered_findings = tuple(categorized[f.id] for f in findings)
    return GroupingResult(groups=groups, findings=ordered_findings, membership=membership)
