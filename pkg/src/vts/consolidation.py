"""Collation of observer outputs into the composite result document,
plus provenance traces and the standalone HTML rendering."""

from __future__ import annotations

import html
from collections.abc import Mapping, Sequence
from vts.errors import ConsolidationFailed, UnknownId
from vts.evidence import (
    ActionLever,
    CorpusIndex,
    Finding,
    IssueGroup,
    Level,
    PageRecord,
    ProvenanceChain,
    ProvenanceHop,
    ResultDocument,
    StrategyStep,
    owning_group,
    validate_result_document,
)

FROZEN_TIMESTAMP = "1970-01-01T00:00:00Z"


def _anchor_hop(finding: Finding) -> ProvenanceHop:
    return ProvenanceHop(
        id=finding.id,
        level=Level.MICRO,
        page_reference=finding.page_reference,
        element_id=finding.element_id,
        excerpt=finding.excerpt,
    )


def _lever_chain(lever: ActionLever, findings: Mapping[str, Finding]) -> ProvenanceChain:
    target = findings[min(lever.evidence_links)]
    return ProvenanceChain((ProvenanceHop(id=lever.id, level=Level.MESO), _anchor_hop(target)))


def _step_chain(
    step: StrategyStep,
    levers: Mapping[str, ActionLever],
    findings: Mapping[str, Finding],
) -> ProvenanceChain:
    lever = levers[min(step.lever_links)]
    target = findings[min(lever.evidence_links)]
    return ProvenanceChain(
        (
            ProvenanceHop(id=step.id, level=Level.MACRO),
            ProvenanceHop(id=lever.id, level=Level.MESO),
            _anchor_hop(target),
        )
    )


def consolidate(
    findings: Sequence[Finding],
    groups: Mapping[str, Sequence[IssueGroup]],
    levers: Sequence[ActionLever],
    steps: Sequence[StrategyStep],
    corpus: Sequence[PageRecord] | CorpusIndex,
    source: str,
    generated_at: str,
) -> ResultDocument:
    """Assemble and fully validate the composite document.

    Provenance chains are built by following each step to its smallest
    lever id and each lever to its smallest evidence id, so the walk is
    deterministic and always ends on a micro anchor.
    """
    finding_map = {f.id: f for f in findings}
    lever_map = {lv.id: lv for lv in levers}
    provenance: dict[str, ProvenanceChain] = {}
    dangling: list[str] = []
    for lever in levers:
        if lever.evidence_links and min(lever.evidence_links) in finding_map:
            provenance[lever.id] = _lever_chain(lever, finding_map)
        else:
            dangling.append(lever.id)
    for step in steps:
        lever = lever_map.get(min(step.lever_links)) if step.lever_links else None
        if (
            lever is not None
            and lever.evidence_links
            and min(lever.evidence_links) in finding_map
        ):
            provenance[step.id] = _step_chain(step, lever_map, finding_map)
        else:
            dangling.append(step.id)

    doc = ResultDocument(
        source=source,
        generated_at=generated_at,
        micro_findings=tuple(findings),
        grouped_issues={cat: tuple(grp) for cat, grp in groups.items()},
        meso_levers=tuple(levers),
        macro_plan=tuple(steps),
        provenance=provenance,
    )
    report = validate_result_document(doc, corpus)
    if not report.ok:
        raise ConsolidationFailed(report)
    return doc


def trace(doc: ResultDocument, record_id: str) -> ProvenanceChain:
    """Walk any record id down to its micro evidence anchor."""
    finding = doc.finding(record_id)
    if finding is not None:
        return ProvenanceChain((_anchor_hop(finding),))
    chain = doc.provenance.get(record_id)
    if chain is not None:
        return chain
    for groups in doc.grouped_issues.values():
        for group in groups:
            if group.group_id == record_id:
                rep = group.representative_issue
                for candidate in doc.micro_findings:
                    if candidate.title == rep.title:
                        return ProvenanceChain(
                            (
                                ProvenanceHop(id=group.group_id, level=Level.MICRO),
                                _anchor_hop(candidate),
                            )
                        )
    raise UnknownId(record_id)


# --- HTML rendering -----------------------------------------------------

_CSS = """
body { font-family: Georgia, 'Times New Roman', serif; margin: 2rem auto; max-width: 60rem;
       line-height: 1.5; color: #1a1a1a; background: #fdfdfb; padding: 0 1rem; }
h1, h2, h3 { font-family: Helvetica, Arial, sans-serif; }
h1 { border-bottom: 3px solid #1a1a1a; padding-bottom: .3rem; }
h2 { margin-top: 2.2rem; border-bottom: 1px solid #bbb; padding-bottom: .2rem; }
.meta { color: #555; font-size: .9rem; }
.badge { font-family: Helvetica, Arial, sans-serif; font-size: .75rem; font-weight: bold;
         padding: .1rem .5rem; border-radius: .6rem; color: #fff; vertical-align: middle; }
.badge-high { background: #b02a1a; }
.badge-medium { background: #c77f00; }
.badge-low { background: #3a7d2c; }
.priority { font-family: Helvetica, Arial, sans-serif; font-size: .8rem; color: #333;
            background: #eee; padding: .1rem .5rem; border-radius: .6rem; }
.group { border: 1px solid #ccc; border-radius: .4rem; margin: 1rem 0; padding: .6rem 1rem;
         background: #fff; }
.finding { margin: .8rem 0 .8rem 1rem; padding-left: .8rem; border-left: 3px solid #ddd; }
blockquote.excerpt { margin: .4rem 0; padding: .4rem .8rem; background: #f4f2ea;
                     border-left: 3px solid #8a7b4f; font-style: italic; white-space: pre-wrap; }
.pageref { font-size: .85rem; }
code { background: #f0f0f0; padding: 0 .25rem; }
table.plan { border-collapse: collapse; }
table.plan td, table.plan th { border: 1px solid #ccc; padding: .3rem .6rem; text-align: left; }
details > summary { cursor: pointer; font-weight: bold; }
.empty { color: #777; font-style: italic; }
pre.element { background: #f7f7f7; border: 1px solid #ddd; padding: .5rem; overflow-x: auto; }
"""


def _esc(value: object) -> str:
    return html.escape(str(value), quote=True)


def _badge(severity) -> str:
    label = severity.value
    return f'<span class="badge badge-{label.lower()}">{label}</span>'


def _finding_block(finding: Finding, heading: str = "h4") -> list[str]:
    parts = [f'<div class="finding" id="finding-{_esc(finding.id)}">']
    parts.append(
        f"<{heading}>{_esc(finding.title)} {_badge(finding.severity)} "
        f'<code>{_esc(finding.id)}</code></{heading}>'
    )
    if finding.description:
        parts.append(f"<p>{_esc(finding.description)}</p>")
    parts.append(
        f'<p class="pageref"><a href="#page-{_esc(finding.page_reference)}">'
        f"page {_esc(finding.page_reference)}</a>, element "
        f"<code>{_esc(finding.element_id)}</code>"
        + (f", bbox {_esc(finding.bbox.as_list())}" if finding.bbox else "")
        + f", status {_esc(finding.status.value)}</p>"
    )
    parts.append(f'<blockquote class="excerpt">{_esc(finding.excerpt)}</blockquote>')
    if finding.links:
        linked = ", ".join(
            f'<a href="#finding-{_esc(link)}"><code>{_esc(link)}</code></a>'
            for link in finding.links
        )
        parts.append(f'<p class="pageref">linked: {linked}</p>')
    parts.append("</div>")
    return parts


def render_html(
    doc: ResultDocument, corpus: Sequence[PageRecord] | CorpusIndex | None = None
) -> str:
    """Render the document as one dependency-free HTML page."""
    index: CorpusIndex | None
    if corpus is None:
        index = None
    elif isinstance(corpus, CorpusIndex):
        index = corpus
    else:
        index = CorpusIndex(corpus)

    by_group: dict[str, list[Finding]] = {}
    loose: list[Finding] = []
    for finding in sorted(doc.micro_findings, key=lambda f: f.id):
        gid = owning_group(doc, finding)
        if gid is None:
            loose.append(finding)
        else:
            by_group.setdefault(gid, []).append(finding)

    out: list[str] = []
    out.append("<!DOCTYPE html>")
    out.append('<html lang="en"><head><meta charset="utf-8">')
    out.append(f"<title>Findings — {_esc(doc.source)}</title>")
    out.append(f"<style>{_CSS}</style></head><body>")
    out.append(f"<h1>Findings — {_esc(doc.source)}</h1>")
    out.append(
        f'<p class="meta">source <code>{_esc(doc.source)}</code> · generated '
        f"{_esc(doc.generated_at)}</p>"
    )

    if not doc.micro_findings and not doc.all_groups():
        out.append('<p class="empty">No findings.</p>')

    if doc.grouped_issues:
        out.append("<h2>Grouped issues</h2>")
        for category in sorted(doc.grouped_issues):
            out.append(f"<h3>{_esc(category)}</h3>")
            for group in doc.grouped_issues[category]:
                rep = group.representative_issue
                out.append(f'<div class="group" id="group-{_esc(group.group_id)}">')
                out.append(
                    f"<h4><code>{_esc(group.group_id)}</code> {_esc(rep.title)} "
                    f"{_badge(rep.severity)} "
                    f'<span class="priority">priority {group.priority_score}</span></h4>'
                )
                if rep.description:
                    out.append(f"<p>{_esc(rep.description)}</p>")
                out.append(
                    f'<p class="pageref">primary evidence on '
                    f'<a href="#page-{_esc(rep.page_reference)}">page {_esc(rep.page_reference)}</a></p>'
                )
                if rep.related_issues:
                    out.append("<details open><summary>"
                               f"{len(rep.related_issues)} related issue(s)</summary><ul>")
                    for related in rep.related_issues:
                        pages = ", ".join(
                            f'<a href="#page-{_esc(p)}">{_esc(p)}</a>' for p in related.pages
                        )
                        out.append(f"<li>{_esc(related.title)} (page {pages})</li>")
                    out.append("</ul></details>")
                members = by_group.get(group.group_id, [])
                if members:
                    out.append("<details open><summary>member findings</summary>")
                    for finding in members:
                        out.extend(_finding_block(finding, heading="h5"))
                    out.append("</details>")
                out.append("</div>")

    if loose:
        out.append("<h2>Findings outside groups</h2>")
        for finding in loose:
            out.extend(_finding_block(finding))

    if doc.meso_levers:
        out.append("<h2>Action levers</h2>")
        for lever in sorted(doc.meso_levers, key=lambda lv: lv.id):
            out.append(f'<div class="group" id="lever-{_esc(lever.id)}">')
            out.append(
                f"<h4><code>{_esc(lever.id)}</code> {_esc(lever.lever_name)}</h4>"
            )
            out.append(
                f"<p>target: {_esc(lever.target.metric)} → {_esc(lever.target.value)} "
                f"{_esc(lever.target.unit)} · budget {_esc(lever.resources.budget)} "
                f"{_esc(lever.resources.currency)} · headcount {lever.resources.headcount}</p>"
            )
            if lever.steps:
                out.append("<ol>")
                out.extend(f"<li>{_esc(step)}</li>" for step in lever.steps)
                out.append("</ol>")
            if lever.synergy_notes:
                out.append(f"<p>synergies: {_esc(lever.synergy_notes)}</p>")
            if lever.tradeoff_notes:
                out.append(f"<p>trade-offs: {_esc(lever.tradeoff_notes)}</p>")
            evidence = ", ".join(
                f'<a href="#finding-{_esc(link)}"><code>{_esc(link)}</code></a>'
                for link in sorted(lever.evidence_links)
            )
            out.append(f'<p class="pageref">evidence: {evidence}</p>')
            out.append("</div>")

    if doc.macro_plan:
        out.append("<h2>Strategy plan</h2>")
        out.append('<table class="plan"><tr><th>#</th><th>initiative</th><th>start</th>'
                   "<th>cashflows</th><th>NPV</th><th>levers</th></tr>")
        for step in sorted(doc.macro_plan, key=lambda st: st.sequence_index):
            levers_html = ", ".join(
                f'<a href="#lever-{_esc(link)}"><code>{_esc(link)}</code></a>'
                for link in sorted(step.lever_links)
            )
            out.append(
                f'<tr id="step-{_esc(step.id)}"><td>{step.sequence_index}</td>'
                f"<td>{_esc(step.initiative)}</td><td>Q{step.start_quarter}</td>"
                f"<td>{_esc(list(step.cashflows))}</td><td>{step.npv:.4f}</td>"
                f"<td>{levers_html}</td></tr>"
            )
        out.append("</table>")
        for step in sorted(doc.macro_plan, key=lambda st: st.sequence_index):
            if step.risk_note:
                out.append(
                    f'<p class="pageref"><code>{_esc(step.id)}</code> risk: '
                    f"{_esc(step.risk_note)}</p>"
                )

    if doc.provenance:
        out.append("<h2>Audit trail</h2><ul>")
        for owner in sorted(doc.provenance):
            chain = doc.provenance[owner]
            hops = " → ".join(
                f"<code>{_esc(hop.id)}</code>"
                + (f" (page {_esc(hop.page_reference)})" if hop.page_reference else "")
                for hop in chain.hops
            )
            out.append(f"<li>{hops}</li>")
        out.append("</ul>")

    if index is not None and index.pages:
        out.append("<h2>Source pages</h2>")
        for ref in sorted(index.pages):
            page = index.pages[ref]
            out.append(f'<h3 id="page-{_esc(ref)}">Page {_esc(ref)}</h3>')
            for element in page.elements:
                out.append(
                    f"<p><code>{_esc(element.id)}</code> ({_esc(element.kind.value)}, "
                    f"bbox {_esc(element.bbox.as_list())})</p>"
                )
                out.append(f'<pre class="element">{_esc(element.payload)}</pre>')

    out.append("</body></html>")
    return "\n".join(out) + "\n"
