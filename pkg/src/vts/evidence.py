"""Domain types and validation for the evidence/traceability schema.

Every record that flows through the pipeline is defined here as an
immutable value. Validation is pure: violations are returned as data,
never raised, so callers can decide whether a bad record is rejected,
reported, or fatal.
"""

from __future__ import annotations

import csv
import io
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum

from vts.npv import compute_npv

PAGE_REF_RE = re.compile(r"^[0-9]{3}$")
GROUP_ID_RE = re.compile(r"^[A-Z]{2}[0-9]+$")
AMENDED_SUFFIX_RE = re.compile(r"-a[0-9]+$")

NPV_REL_TOL = 1e-9


class Severity(str, Enum):
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"

    @property
    def rank(self) -> int:
        return {"High": 3, "Medium": 2, "Low": 1}[self.value]


class Level(str, Enum):
    MICRO = "micro"
    MESO = "meso"
    MACRO = "macro"


class ElementKind(str, Enum):
    TEXT = "text"
    TABLE = "table"
    FIGURE = "figure"


class FindingStatus(str, Enum):
    PROPOSED = "proposed"
    ACCEPTED = "accepted"
    AMENDED = "amended"
    DISCARDED = "discarded"


def page_ref(value: int | str) -> str:
    """Normalize a page number to the zero-padded 3-digit form ('002')."""
    if isinstance(value, int):
        if not 1 <= value <= 999:
            raise ValueError(f"page number out of range: {value}")
        return f"{value:03d}"
    if not PAGE_REF_RE.match(value):
        raise ValueError(f"bad page reference: {value!r}")
    return value


@dataclass(frozen=True)
class BBox:
    """Pixel rectangle at the rasterization DPI; top-left origin."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        for name in ("x0", "y0", "x1", "y1"):
            v = getattr(self, name)
            if isinstance(v, float):
                object.__setattr__(self, name, int(round(v)))
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"bbox coordinates must be >= 0: {self}")
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"bbox must have positive extent: {self}")

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class PageElement:
    """One extracted element; exactly the payload matching `kind` is set."""

    id: str
    kind: ElementKind
    bbox: BBox
    content: str | None = None
    csv: str | None = None
    caption: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("element id must be non-empty")
        payloads = {"text": self.content, "table": self.csv, "figure": self.caption}
        set_fields = [k for k, v in payloads.items() if v is not None]
        if set_fields != [self.kind.value]:
            raise ValueError(
                f"element {self.id}: kind {self.kind.value} requires exactly "
                f"its own payload, got {set_fields or 'none'}"
            )

    @property
    def payload(self) -> str:
        return {
            ElementKind.TEXT: self.content,
            ElementKind.TABLE: self.csv,
            ElementKind.FIGURE: self.caption,
        }[self.kind]


@dataclass(frozen=True)
class PageRecord:
    """One rasterized and extracted page, elements in reading order."""

    page: str
    source: str
    dpi: int
    elements: tuple[PageElement, ...]

    def __post_init__(self):
        object.__setattr__(self, "page", page_ref(self.page))
        object.__setattr__(self, "elements", tuple(self.elements))
        if self.dpi <= 0:
            raise ValueError(f"dpi must be positive, got {self.dpi}")
        seen = set()
        prefix = f"p{self.page}-"
        for el in self.elements:
            if el.id in seen:
                raise ValueError(f"duplicate element id {el.id} on page {self.page}")
            seen.add(el.id)
            if not el.id.startswith(prefix):
                raise ValueError(f"element id {el.id} does not follow page {self.page}")

    def element(self, element_id: str) -> PageElement | None:
        for el in self.elements:
            if el.id == element_id:
                return el
        return None


@dataclass(frozen=True)
class Finding:
    """One evidence-anchored observation."""

    id: str
    level: Level
    title: str
    description: str
    severity: Severity
    page_reference: str
    element_id: str
    excerpt: str
    bbox: BBox | None = None
    category: str = ""
    links: tuple[str, ...] = ()
    status: FindingStatus = FindingStatus.PROPOSED

    def __post_init__(self):
        object.__setattr__(self, "page_reference", page_ref(self.page_reference))
        object.__setattr__(self, "links", tuple(self.links))
        if not self.id:
            raise ValueError("finding id must be non-empty")
        if not self.title:
            raise ValueError(f"finding {self.id}: title must be non-empty")

    @property
    def base_id(self) -> str:
        """Id with any amendment suffix ('-a1', '-a2', ...) stripped."""
        return AMENDED_SUFFIX_RE.sub("", self.id)

    @property
    def is_live(self) -> bool:
        """Live findings feed grouping and downstream tiers; amended
        originals and discarded findings are historical records."""
        return self.status in (FindingStatus.PROPOSED, FindingStatus.ACCEPTED)


@dataclass(frozen=True)
class RelatedIssue:
    title: str
    pages: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "pages", tuple(page_ref(p) for p in self.pages))
        if not self.pages:
            raise ValueError(f"related issue {self.title!r} must name at least one page")


@dataclass(frozen=True)
class RepresentativeIssue:
    title: str
    description: str
    severity: Severity
    page_reference: str
    related_issues: tuple[RelatedIssue, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "page_reference", page_ref(self.page_reference))
        object.__setattr__(self, "related_issues", tuple(self.related_issues))


@dataclass(frozen=True)
class IssueGroup:
    """A cluster of related findings with a representative and a priority."""

    group_id: str
    category: str
    representative_issue: RepresentativeIssue
    priority_score: int

    def __post_init__(self):
        if not GROUP_ID_RE.match(self.group_id):
            raise ValueError(f"bad group id: {self.group_id!r}")
        if not 1 <= self.priority_score <= 10:
            raise ValueError(f"priority score out of [1,10]: {self.priority_score}")


@dataclass(frozen=True)
class LeverTarget:
    metric: str
    value: float
    unit: str

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class LeverResources:
    budget: float
    currency: str
    headcount: int

    def __post_init__(self):
        object.__setattr__(self, "budget", float(self.budget))


@dataclass(frozen=True)
class ActionLever:
    """A controllable variable with a quantified target, linked to micro evidence."""

    id: str
    lever_name: str
    target: LeverTarget
    steps: tuple[str, ...]
    resources: LeverResources
    synergy_notes: str
    tradeoff_notes: str
    evidence_links: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "evidence_links", tuple(self.evidence_links))
        if not self.id:
            raise ValueError("lever id must be non-empty")


@dataclass(frozen=True)
class StrategyStep:
    """A sequenced initiative with per-period cashflows and a local NPV."""

    id: str
    initiative: str
    sequence_index: int
    start_quarter: int
    cashflows: tuple[float, ...]
    discount_rate: float
    npv: float
    risk_note: str
    lever_links: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "cashflows", tuple(float(c) for c in self.cashflows))
        object.__setattr__(self, "lever_links", tuple(self.lever_links))
        object.__setattr__(self, "discount_rate", float(self.discount_rate))
        object.__setattr__(self, "npv", float(self.npv))
        if self.sequence_index < 1:
            raise ValueError(f"sequence index must be >= 1: {self.sequence_index}")


@dataclass(frozen=True)
class ProvenanceHop:
    id: str
    level: Level
    page_reference: str | None = None
    element_id: str | None = None
    excerpt: str | None = None


@dataclass(frozen=True)
class ProvenanceChain:
    """Hops from a recommendation down to its micro anchor (always last)."""

    hops: tuple[ProvenanceHop, ...]

    def __post_init__(self):
        object.__setattr__(self, "hops", tuple(self.hops))
        if not self.hops:
            raise ValueError("provenance chain must have at least one hop")

    @property
    def terminal(self) -> ProvenanceHop:
        return self.hops[-1]


@dataclass(frozen=True)
class ResultDocument:
    """The composite, fully traceable result of a pipeline run."""

    source: str
    generated_at: str
    micro_findings: tuple[Finding, ...] = ()
    grouped_issues: Mapping[str, tuple[IssueGroup, ...]] = field(default_factory=dict)
    meso_levers: tuple[ActionLever, ...] = ()
    macro_plan: tuple[StrategyStep, ...] = ()
    provenance: Mapping[str, ProvenanceChain] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "micro_findings", tuple(self.micro_findings))
        object.__setattr__(
            self,
            "grouped_issues",
            {cat: tuple(groups) for cat, groups in self.grouped_issues.items()},
        )
        object.__setattr__(self, "meso_levers", tuple(self.meso_levers))
        object.__setattr__(self, "macro_plan", tuple(self.macro_plan))
        object.__setattr__(self, "provenance", dict(self.provenance))

    def finding(self, finding_id: str) -> Finding | None:
        for f in self.micro_findings:
            if f.id == finding_id:
                return f
        return None

    def lever(self, lever_id: str) -> ActionLever | None:
        for lv in self.meso_levers:
            if lv.id == lever_id:
                return lv
        return None

    def step(self, step_id: str) -> StrategyStep | None:
        for st in self.macro_plan:
            if st.id == step_id:
                return st
        return None

    def all_groups(self) -> list[IssueGroup]:
        return [g for groups in self.grouped_issues.values() for g in groups]


# --- validation ---------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.code} [{self.subject}]" + (f": {self.detail}" if self.detail else "")


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "violations", tuple(self.violations))

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    def summary(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(str(v) for v in self.violations)


class CorpusIndex:
    """Page and element lookup over a list of PageRecords."""

    def __init__(self, pages: Sequence[PageRecord]):
        self.pages: dict[str, PageRecord] = {p.page: p for p in pages}

    def page(self, ref: str) -> PageRecord | None:
        return self.pages.get(ref)

    def element(self, ref: str, element_id: str) -> PageElement | None:
        page = self.pages.get(ref)
        return page.element(element_id) if page else None


def csv_cells(csv_text: str) -> list[str]:
    reader = csv.reader(io.StringIO(csv_text))
    return [cell for row in reader for cell in row]


def excerpt_in_element(excerpt: str, element: PageElement) -> bool:
    """True when the excerpt is a contiguous substring of a text element's
    content, an exact (whitespace-trimmed) cell of a table's CSV, or a
    substring of a figure caption."""
    if element.kind is ElementKind.TEXT:
        return excerpt in (element.content or "")
    if element.kind is ElementKind.TABLE:
        want = excerpt.strip()
        return any(cell.strip() == want for cell in csv_cells(element.csv or ""))
    return excerpt in (element.caption or "")


def _check_anchor(
    subject: str,
    page_reference: str,
    element_id: str,
    excerpt: str,
    corpus: CorpusIndex,
) -> list[Violation]:
    # Dependent checks short-circuit: an unresolvable page reports only
    # page-unresolvable, not the element/excerpt failures it implies.
    page = corpus.page(page_reference)
    if page is None:
        return [Violation("page-unresolvable", subject, f"page {page_reference}")]
    element = page.element(element_id)
    if element is None:
        return [Violation("element-unresolvable", subject, f"element {element_id} on page {page_reference}")]
    if excerpt and not excerpt_in_element(excerpt, element):
        return [Violation("excerpt-not-in-source", subject, f"excerpt {excerpt[:60]!r}")]
    return []


def validate_finding(
    finding: Finding, corpus: Sequence[PageRecord] | CorpusIndex
) -> ValidationReport:
    """Check a finding's evidence anchor against the corpus.

    Violations are data, not errors; the report is ok iff none occurred.
    """
    index = corpus if isinstance(corpus, CorpusIndex) else CorpusIndex(corpus)
    if not index.pages:
        raise ValueError("corpus must be non-empty")
    violations: list[Violation] = []
    if finding.level is Level.MICRO and not finding.excerpt:
        violations.append(Violation("excerpt-empty", finding.id))
    violations.extend(
        _check_anchor(finding.id, finding.page_reference, finding.element_id, finding.excerpt, index)
    )
    return ValidationReport(tuple(violations))


def coverage_entries(doc: ResultDocument) -> list[tuple[str, str]]:
    """All (group_id, title) issue entries across the grouped issues."""
    entries = []
    for groups in doc.grouped_issues.values():
        for group in groups:
            entries.append((group.group_id, group.representative_issue.title))
            for related in group.representative_issue.related_issues:
                entries.append((group.group_id, related.title))
    return entries


def owning_group(doc: ResultDocument, finding: Finding) -> str | None:
    """Group id whose representative or related entry carries this title."""
    for group_id, title in coverage_entries(doc):
        if title == finding.title:
            return group_id
    return None


def validate_result_document(
    doc: ResultDocument, corpus: Sequence[PageRecord] | CorpusIndex | None = None
) -> ValidationReport:
    """Aggregate finding validation plus referential-integrity checks.

    With corpus=None only document-internal structure is checked;
    evidence anchors need the corpus to be verified.
    """
    index: CorpusIndex | None
    if corpus is None:
        index = None
    elif isinstance(corpus, CorpusIndex):
        index = corpus
    else:
        index = CorpusIndex(corpus)

    violations: list[Violation] = []

    finding_ids = [f.id for f in doc.micro_findings]
    lever_ids = [lv.id for lv in doc.meso_levers]
    step_ids = [st.id for st in doc.macro_plan]
    group_ids = [g.group_id for g in doc.all_groups()]
    all_ids = finding_ids + lever_ids + step_ids + group_ids
    seen: set[str] = set()
    for i in all_ids:
        if i in seen:
            violations.append(Violation("duplicate-id", i))
        seen.add(i)
    finding_set = set(finding_ids)
    lever_set = set(lever_ids)

    for f in doc.micro_findings:
        if index is not None:
            violations.extend(validate_finding(f, index).violations)
        for link in f.links:
            if link not in finding_set:
                violations.append(Violation("dangling-link", f.id, f"links -> {link}"))

    # Group integrity. Coverage matches entries to findings by title so a
    # multi-page related entry can stand for several findings at once.
    entries = coverage_entries(doc)
    entry_titles = [title for _, title in entries]
    for cat, groups in doc.grouped_issues.items():
        for group in groups:
            subject = group.group_id
            if group.category != cat:
                violations.append(Violation("category-mismatch", subject, f"{group.category!r} under {cat!r}"))
            if index is not None:
                rep = group.representative_issue
                if index.page(rep.page_reference) is None:
                    violations.append(Violation("page-unresolvable", subject, f"page {rep.page_reference}"))
                for related in rep.related_issues:
                    for p in related.pages:
                        if index.page(p) is None:
                            violations.append(Violation("page-unresolvable", subject, f"page {p}"))

    for f in doc.micro_findings:
        if not f.is_live:
            continue
        matches = entry_titles.count(f.title)
        if matches == 0:
            violations.append(Violation("finding-uncovered", f.id))
        elif matches > 1:
            violations.append(Violation("finding-multiply-covered", f.id, f"{matches} entries"))

    for lv in doc.meso_levers:
        if not lv.evidence_links:
            violations.append(Violation("empty-evidence", lv.id))
        for link in lv.evidence_links:
            if link not in finding_set:
                violations.append(Violation("dangling-link", lv.id, f"evidence -> {link}"))
        if not _is_finite(lv.target.value):
            violations.append(Violation("non-finite-target", lv.id))

    for st in doc.macro_plan:
        if not st.lever_links:
            violations.append(Violation("empty-links", st.id))
        for link in st.lever_links:
            if link not in lever_set:
                violations.append(Violation("dangling-link", st.id, f"lever -> {link}"))
        if not st.cashflows:
            violations.append(Violation("empty-cashflows", st.id))
        else:
            expected = compute_npv(st.cashflows, st.discount_rate)
            if abs(st.npv - expected) > NPV_REL_TOL * max(1.0, abs(expected)):
                violations.append(
                    Violation("npv-mismatch", st.id, f"stored {st.npv!r}, recomputed {expected!r}")
                )

    if doc.macro_plan:
        indices = sorted(st.sequence_index for st in doc.macro_plan)
        if indices != list(range(1, len(indices) + 1)):
            violations.append(Violation("sequence-gap", "macro_plan", f"indices {indices}"))

    # Provenance: every meso/macro id carries a chain ending on a micro
    # anchor; chains hold their own excerpt copies, checked independently.
    for owner_id in lever_ids + step_ids:
        chain = doc.provenance.get(owner_id)
        if chain is None:
            violations.append(Violation("provenance-missing", owner_id))
            continue
        terminal = chain.terminal
        if (
            terminal.level is not Level.MICRO
            or not terminal.page_reference
            or not terminal.element_id
            or not terminal.excerpt
        ):
            violations.append(Violation("provenance-terminal", owner_id))
            continue
        for hop in chain.hops:
            if hop.id not in seen:
                violations.append(Violation("dangling-link", owner_id, f"provenance hop -> {hop.id}"))
        if index is not None:
            violations.extend(
                _check_anchor(owner_id, terminal.page_reference, terminal.element_id, terminal.excerpt, index)
            )
    for chain_id in doc.provenance:
        if chain_id not in seen:
            violations.append(Violation("dangling-link", chain_id, "provenance owner unknown"))

    return ValidationReport(tuple(violations))


def _is_finite(value: float) -> bool:
    return value == value and value not in (float("inf"), float("-inf"))


def with_status(finding: Finding, status: FindingStatus) -> Finding:
    return replace(finding, status=status)


def next_amend_id(base_id: str, existing_ids: Iterable[str]) -> str:
    """Next free '-aN' id for an amendment of `base_id`."""
    n = 1
    taken = set(existing_ids)
    while f"{base_id}-a{n}" in taken:
        n += 1
    return f"{base_id}-a{n}"
