"""Seeded generators for corpora, findings, and full result documents,
plus single-defect mutators used by the validation fuzz tests.

Everything is driven by a caller-supplied ``random.Random`` so failures
reproduce from the printed seed alone.
"""

from __future__ import annotations

import random
from dataclasses import replace

from vts.consolidation import FROZEN_TIMESTAMP, consolidate
from vts.evidence import (
    ActionLever,
    BBox,
    ElementKind,
    Finding,
    FindingStatus,
    LeverResources,
    LeverTarget,
    Level,
    PageElement,
    PageRecord,
    ProvenanceChain,
    RelatedIssue,
    ResultDocument,
    Severity,
    StrategyStep,
    csv_cells,
)
from vts.grouping import DEFAULT_TAXONOMY, group_findings
from vts.npv import compute_npv

WORDS = [
    "margin", "revenue", "staffing", "delivery", "pricing", "quality",
    "workload", "satisfaction", "segment", "cash", "attrition", "score",
    "technology", "operations", "profit", "cost", "morale", "market",
]

LEVER_NAMES = ["staffing", "marketing", "pricing", "discount rate"]


def make_corpus(rng: random.Random, n_pages: int | None = None) -> list[PageRecord]:
    n_pages = n_pages or rng.randint(1, 6)
    pages = []
    for p in range(1, n_pages + 1):
        ref = f"{p:03d}"
        elements = []
        for e in range(1, rng.randint(1, 3) + 1):
            eid = f"p{ref}-e{e:02d}"
            bbox = BBox(10, 30 * e, 420, 30 * e + 24)
            kind = rng.choice(list(ElementKind))
            words = " ".join(rng.choice(WORDS) for _ in range(6))
            if kind is ElementKind.TEXT:
                el = PageElement(eid, kind, bbox, content=f"Page {ref} notes: {words}.")
            elif kind is ElementKind.TABLE:
                rows = [f"{rng.choice(WORDS)},{rng.randint(1, 999)}" for _ in range(3)]
                el = PageElement(eid, kind, bbox, csv="metric,value\n" + "\n".join(rows))
            else:
                el = PageElement(eid, kind, bbox, caption=f"Figure {e}: {words}.")
            elements.append(el)
        pages.append(PageRecord(page=ref, source="sample.pdf", dpi=72, elements=tuple(elements)))
    return pages


def _excerpt_for(rng: random.Random, element: PageElement) -> str:
    if element.kind is ElementKind.TEXT:
        text = element.content or ""
        start = rng.randint(0, max(0, len(text) - 8))
        return text[start : start + rng.randint(4, 12)] or text
    if element.kind is ElementKind.TABLE:
        return rng.choice(csv_cells(element.csv or "") or ["metric"])
    text = element.caption or ""
    return text[: rng.randint(6, max(6, len(text)))]


def make_findings(rng: random.Random, corpus: list[PageRecord], n: int | None = None) -> list[Finding]:
    n = n if n is not None else rng.randint(1, 8)
    findings: list[Finding] = []
    per_page: dict[str, int] = {}
    for k in range(n):
        page = rng.choice(corpus)
        element = rng.choice(page.elements)
        per_page[page.page] = per_page.get(page.page, 0) + 1
        fid = f"f{page.page}-{per_page[page.page]:02d}"
        findings.append(
            Finding(
                id=fid,
                level=Level.MICRO,
                title=f"Issue {k + 1:02d} {rng.choice(WORDS)} watch",
                description=f"The {rng.choice(WORDS)} trend needs attention on page {page.page}.",
                severity=rng.choice(list(Severity)),
                page_reference=page.page,
                element_id=element.id,
                excerpt=_excerpt_for(rng, element),
                bbox=element.bbox,
            )
        )
    # Symmetric link pairs, the shape the linking pass produces.
    if len(findings) >= 2:
        links: dict[str, set[str]] = {f.id: set() for f in findings}
        for _ in range(rng.randint(0, len(findings))):
            a, b = rng.sample(findings, 2)
            links[a.id].add(b.id)
            links[b.id].add(a.id)
        findings = [
            replace(f, links=tuple(sorted(links[f.id]))) for f in findings
        ]
    return findings


def make_document(
    rng: random.Random,
    corpus: list[PageRecord] | None = None,
    vary_status: bool = False,
) -> tuple[ResultDocument, list[PageRecord]]:
    """A structurally valid document over a generated corpus."""
    corpus = corpus or make_corpus(rng)
    findings = make_findings(rng, corpus)
    grouping = group_findings(findings, DEFAULT_TAXONOMY)
    findings = list(grouping.findings)
    if vary_status:
        findings = [
            replace(f, status=rng.choice(list(FindingStatus))) for f in findings
        ]
    levers = []
    for i in range(rng.randint(0, 3)):
        evidence = rng.sample([f.id for f in findings], rng.randint(1, len(findings)))
        levers.append(
            ActionLever(
                id=f"lv{i + 1:02d}",
                lever_name=rng.choice(LEVER_NAMES),
                target=LeverTarget(metric=rng.choice(WORDS), value=rng.uniform(1, 99), unit="%"),
                steps=(f"Adjust {rng.choice(WORDS)}", f"Review {rng.choice(WORDS)}"),
                resources=LeverResources(budget=float(rng.randint(10, 900)) * 1000.0, currency="USD", headcount=rng.randint(1, 9)),
                synergy_notes=f"Reinforces the {rng.choice(WORDS)} push.",
                tradeoff_notes=f"Competes with {rng.choice(WORDS)} spending.",
                evidence_links=tuple(sorted(evidence)),
            )
        )
    steps = []
    if levers:
        for i in range(rng.randint(0, 2)):
            cashflows = tuple(
                round(rng.uniform(-200, 200), 2) * 1000.0 for _ in range(rng.randint(1, 6))
            )
            rate = rng.choice([0.108, 0.05, 0.2])
            linked = rng.sample([lv.id for lv in levers], rng.randint(1, len(levers)))
            steps.append(
                StrategyStep(
                    id=f"st{i + 1:02d}",
                    initiative=f"Initiative {i + 1} {rng.choice(WORDS)}",
                    sequence_index=i + 1,
                    start_quarter=rng.randint(1, 4),
                    cashflows=cashflows,
                    discount_rate=rate,
                    npv=compute_npv(cashflows, rate),
                    risk_note=f"Watch {rng.choice(WORDS)} while rolling out.",
                    lever_links=tuple(sorted(linked)),
                )
            )
    doc = consolidate(
        findings, grouping.groups, levers, steps, corpus, "sample.pdf", FROZEN_TIMESTAMP
    )
    return doc, corpus


# --- single-defect mutators ----------------------------------------------
#
# Each entry is (name, applicable?, mutate) where mutate returns
# (mutated document, expected violation codes).


def _set_finding(doc: ResultDocument, index: int, **changes) -> ResultDocument:
    findings = list(doc.micro_findings)
    findings[index] = replace(findings[index], **changes)
    return replace(doc, micro_findings=tuple(findings))


def _set_lever(doc: ResultDocument, index: int, **changes) -> ResultDocument:
    levers = list(doc.meso_levers)
    levers[index] = replace(levers[index], **changes)
    return replace(doc, meso_levers=tuple(levers))


def _set_step(doc: ResultDocument, index: int, **changes) -> ResultDocument:
    steps = list(doc.macro_plan)
    steps[index] = replace(steps[index], **changes)
    return replace(doc, macro_plan=tuple(steps))


def _first_group(doc: ResultDocument):
    for cat, groups in doc.grouped_issues.items():
        if groups:
            return cat, groups[0]
    raise AssertionError("document has no groups")


def _replace_group(doc: ResultDocument, category: str, group_index: int, new_group) -> ResultDocument:
    grouped = {cat: list(groups) for cat, groups in doc.grouped_issues.items()}
    grouped[category][group_index] = new_group
    return replace(doc, grouped_issues={c: tuple(g) for c, g in grouped.items()})


def _inject_dangling_finding_link(doc, corpus, rng):
    i = rng.randrange(len(doc.micro_findings))
    links = doc.micro_findings[i].links + ("f999-99",)
    return _set_finding(doc, i, links=links), ["dangling-link"]


def _inject_excerpt_not_in_source(doc, corpus, rng):
    i = rng.randrange(len(doc.micro_findings))
    return _set_finding(doc, i, excerpt="@@absent excerpt@@"), ["excerpt-not-in-source"]


def _inject_excerpt_empty(doc, corpus, rng):
    i = rng.randrange(len(doc.micro_findings))
    return _set_finding(doc, i, excerpt=""), ["excerpt-empty"]


def _inject_page_unresolvable(doc, corpus, rng):
    i = rng.randrange(len(doc.micro_findings))
    return _set_finding(doc, i, page_reference="999"), ["page-unresolvable"]


def _inject_element_unresolvable(doc, corpus, rng):
    i = rng.randrange(len(doc.micro_findings))
    ref = doc.micro_findings[i].page_reference
    return _set_finding(doc, i, element_id=f"p{ref}-e99"), ["element-unresolvable"]


def _inject_duplicate_group_id(doc, corpus, rng):
    groups = doc.all_groups()
    first = groups[0]
    for cat, cat_groups in doc.grouped_issues.items():
        for j, group in enumerate(cat_groups):
            if group.group_id != first.group_id:
                mutated = _replace_group(doc, cat, j, replace(group, group_id=first.group_id))
                return mutated, ["duplicate-id"]
    raise AssertionError("needs two groups")


def _inject_finding_uncovered(doc, corpus, rng):
    for cat, cat_groups in doc.grouped_issues.items():
        for j, group in enumerate(cat_groups):
            rep = group.representative_issue
            if rep.related_issues:
                trimmed = replace(rep, related_issues=rep.related_issues[1:])
                mutated = _replace_group(doc, cat, j, replace(group, representative_issue=trimmed))
                return mutated, ["finding-uncovered"]
    raise AssertionError("needs a related issue")


def _inject_finding_multiply_covered(doc, corpus, rng):
    cat, group = _first_group(doc)
    rep = group.representative_issue
    extra = RelatedIssue(title=rep.title, pages=(rep.page_reference,))
    widened = replace(rep, related_issues=rep.related_issues + (extra,))
    mutated = _replace_group(doc, cat, 0, replace(group, representative_issue=widened))
    return mutated, ["finding-multiply-covered"]


def _inject_category_mismatch(doc, corpus, rng):
    cat, group = _first_group(doc)
    mutated = _replace_group(doc, cat, 0, replace(group, category="Mislabeled"))
    return mutated, ["category-mismatch"]


def _inject_empty_evidence(doc, corpus, rng):
    i = rng.randrange(len(doc.meso_levers))
    return _set_lever(doc, i, evidence_links=()), ["empty-evidence"]


def _inject_dangling_lever_evidence(doc, corpus, rng):
    i = rng.randrange(len(doc.meso_levers))
    links = doc.meso_levers[i].evidence_links + ("f999-99",)
    return _set_lever(doc, i, evidence_links=links), ["dangling-link"]


def _inject_non_finite_target(doc, corpus, rng):
    i = rng.randrange(len(doc.meso_levers))
    lever = doc.meso_levers[i]
    return (
        _set_lever(doc, i, target=replace(lever.target, value=float("nan"))),
        ["non-finite-target"],
    )


def _inject_empty_step_links(doc, corpus, rng):
    i = rng.randrange(len(doc.macro_plan))
    return _set_step(doc, i, lever_links=()), ["empty-links"]


def _inject_empty_cashflows(doc, corpus, rng):
    i = rng.randrange(len(doc.macro_plan))
    return _set_step(doc, i, cashflows=()), ["empty-cashflows"]


def _inject_npv_mismatch(doc, corpus, rng):
    i = rng.randrange(len(doc.macro_plan))
    return _set_step(doc, i, npv=doc.macro_plan[i].npv + 12345.0), ["npv-mismatch"]


def _inject_sequence_gap(doc, corpus, rng):
    i = len(doc.macro_plan) - 1
    bumped = doc.macro_plan[i].sequence_index + 3
    return _set_step(doc, i, sequence_index=bumped), ["sequence-gap"]


def _inject_provenance_missing(doc, corpus, rng):
    owner = rng.choice(sorted(doc.provenance))
    provenance = {k: v for k, v in doc.provenance.items() if k != owner}
    return replace(doc, provenance=provenance), ["provenance-missing"]


def _inject_provenance_terminal(doc, corpus, rng):
    owner = rng.choice(sorted(doc.provenance))
    chain = doc.provenance[owner]
    provenance = dict(doc.provenance)
    provenance[owner] = ProvenanceChain((chain.hops[0],))
    return replace(doc, provenance=provenance), ["provenance-terminal"]


def _inject_provenance_stray_owner(doc, corpus, rng):
    provenance = dict(doc.provenance)
    provenance["zz99"] = next(iter(doc.provenance.values()))
    return replace(doc, provenance=provenance), ["dangling-link"]


INJECTORS = [
    ("dangling-finding-link", lambda d: bool(d.micro_findings), _inject_dangling_finding_link),
    ("excerpt-not-in-source", lambda d: bool(d.micro_findings), _inject_excerpt_not_in_source),
    ("excerpt-empty", lambda d: bool(d.micro_findings), _inject_excerpt_empty),
    ("page-unresolvable", lambda d: bool(d.micro_findings), _inject_page_unresolvable),
    ("element-unresolvable", lambda d: bool(d.micro_findings), _inject_element_unresolvable),
    ("duplicate-group-id", lambda d: len(d.all_groups()) >= 2, _inject_duplicate_group_id),
    (
        "finding-uncovered",
        lambda d: any(g.representative_issue.related_issues for g in d.all_groups()),
        _inject_finding_uncovered,
    ),
    ("finding-multiply-covered", lambda d: bool(d.all_groups()), _inject_finding_multiply_covered),
    ("category-mismatch", lambda d: bool(d.all_groups()), _inject_category_mismatch),
    ("empty-evidence", lambda d: bool(d.meso_levers), _inject_empty_evidence),
    ("dangling-lever-evidence", lambda d: bool(d.meso_levers), _inject_dangling_lever_evidence),
    ("non-finite-target", lambda d: bool(d.meso_levers), _inject_non_finite_target),
    ("empty-step-links", lambda d: bool(d.macro_plan), _inject_empty_step_links),
    ("empty-cashflows", lambda d: bool(d.macro_plan), _inject_empty_cashflows),
    ("npv-mismatch", lambda d: bool(d.macro_plan), _inject_npv_mismatch),
    ("sequence-gap", lambda d: bool(d.macro_plan), _inject_sequence_gap),
    ("provenance-missing", lambda d: bool(d.provenance), _inject_provenance_missing),
    ("provenance-terminal", lambda d: bool(d.provenance), _inject_provenance_terminal),
    ("provenance-stray-owner", lambda d: bool(d.provenance), _inject_provenance_stray_owner),
]
