"""Document assembly, audit-trail walks, full-document validation under
injected corruption, and the standalone HTML rendering."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import replace

import pytest

from conftest import GOLDEN
from docgen import INJECTORS, make_document
from vts.consolidation import FROZEN_TIMESTAMP, consolidate, render_html, trace
from vts.errors import ConsolidationFailed, UnknownId
from vts.evidence import (
    CorpusIndex,
    Level,
    ResultDocument,
    excerpt_in_element,
    validate_result_document,
)

# --- assembly ---------------------------------------------------------------


def test_consolidate_builds_an_audit_chain_for_every_lever_and_step():
    rng = random.Random(41)
    seen_levers = seen_steps = 0
    for _ in range(30):
        doc, corpus = make_document(rng)
        index = CorpusIndex(corpus)
        for lever in doc.meso_levers:
            seen_levers += 1
            chain = doc.provenance[lever.id]
            assert [hop.level for hop in chain.hops] == [Level.MESO, Level.MICRO]
            assert chain.hops[0].id == lever.id
            assert chain.hops[1].id == min(lever.evidence_links)
            terminal = chain.hops[1]
            element = index.element(terminal.page_reference, terminal.element_id)
            assert element is not None
            assert excerpt_in_element(terminal.excerpt, element)
        for step in doc.macro_plan:
            seen_steps += 1
            chain = doc.provenance[step.id]
            assert [hop.level for hop in chain.hops] == [
                Level.MACRO,
                Level.MESO,
                Level.MICRO,
            ]
            assert chain.hops[0].id == step.id
            assert chain.hops[1].id == min(step.lever_links)
    assert seen_levers > 0 and seen_steps > 0


def test_consolidate_rejects_documents_that_fail_validation(golden_doc, corpus):
    findings = list(golden_doc.micro_findings)
    findings[0] = replace(findings[0], excerpt="@@text that the source never said@@")
    with pytest.raises(ConsolidationFailed) as err:
        consolidate(
            findings,
            golden_doc.grouped_issues,
            golden_doc.meso_levers,
            golden_doc.macro_plan,
            corpus,
            source=golden_doc.source,
            generated_at=golden_doc.generated_at,
        )
    assert "excerpt-not-in-source" in err.value.report.codes()


def test_frozen_timestamp_is_stable():
    assert FROZEN_TIMESTAMP == "1970-01-01T00:00:00Z"


# --- audit-trail walks ------------------------------------------------------


def test_trace_of_a_finding_is_its_own_anchor(golden_doc):
    chain = trace(golden_doc, "f001-01")
    (hop,) = chain.hops
    assert hop.id == "f001-01"
    assert hop.level is Level.MICRO
    assert hop.page_reference == "001"
    assert hop.element_id == "p001-e02"
    assert hop.excerpt


def test_trace_of_a_lever_descends_to_micro_evidence(golden_doc):
    chain = trace(golden_doc, "lv01")
    assert [hop.id for hop in chain.hops] == ["lv01", "f001-01"]
    assert chain.hops[-1].element_id


def test_trace_of_a_step_walks_three_levels(golden_doc):
    chain = trace(golden_doc, "st01")
    assert [hop.id for hop in chain.hops] == ["st01", "lv01", "f001-01"]
    assert [hop.level for hop in chain.hops] == [Level.MACRO, Level.MESO, Level.MICRO]


def test_trace_of_a_group_lands_on_its_representative(golden_doc):
    chain = trace(golden_doc, "PF1")
    assert chain.hops[0].id == "PF1"
    assert chain.hops[-1].id == "f001-01"
    assert chain.hops[-1].excerpt


def test_trace_rejects_unknown_ids(golden_doc):
    with pytest.raises(UnknownId):
        trace(golden_doc, "zz99")


def test_every_grouped_and_planned_id_traces_to_verifiable_evidence(golden_doc, corpus):
    """Every lever, step, and group id must walk down to a micro anchor whose
    excerpt re-resolves against the stored page corpus."""
    index = CorpusIndex(corpus)
    ids = (
        [lv.id for lv in golden_doc.meso_levers]
        + [st.id for st in golden_doc.macro_plan]
        + [g.group_id for g in golden_doc.all_groups()]
    )
    assert ids, "the bundled document must exercise all three record kinds"
    for record_id in ids:
        chain = trace(golden_doc, record_id)
        terminal = chain.hops[-1]
        assert terminal.level is Level.MICRO
        element = index.element(terminal.page_reference, terminal.element_id)
        assert element is not None, record_id
        assert excerpt_in_element(terminal.excerpt, element), record_id


# --- validation fuzzing -----------------------------------------------------


def test_clean_generated_documents_validate_with_no_violations():
    rng = random.Random(20260810)
    for _ in range(50):
        doc, corpus = make_document(rng)
        report = validate_result_document(doc, corpus)
        assert report.ok, report.codes()


def test_injected_violations_are_flagged_exactly_and_nothing_else():
    rng = random.Random(20260815)
    coverage: Counter[str] = Counter()
    produced = 0
    attempts = 0
    while produced < 200:
        attempts += 1
        assert attempts < 4000, "document generator stopped yielding usable cases"
        doc, corpus = make_document(rng)
        options = [entry for entry in INJECTORS if entry[1](doc)]
        if not options:
            continue
        name, _, mutate = min(options, key=lambda entry: (coverage[entry[0]], entry[0]))
        mutated, expected = mutate(doc, corpus, rng)
        report = validate_result_document(mutated, corpus)
        assert sorted(report.codes()) == sorted(expected), (
            f"{name}: expected {expected}, got {report.codes()}"
        )
        coverage[name] += 1
        produced += 1
    assert set(coverage) == {name for name, _, _ in INJECTORS}


# --- HTML rendering ---------------------------------------------------------


def test_rendered_page_matches_the_bundled_snapshot(golden_doc, corpus):
    rendered = render_html(golden_doc, corpus)
    assert rendered == (GOLDEN / "result.html").read_text(encoding="utf-8")


def test_rendering_escapes_markup_in_model_text(golden_doc, corpus):
    findings = list(golden_doc.micro_findings)
    findings[0] = replace(findings[0], title="<script>alert('x')</script> & more")
    doc = replace(golden_doc, micro_findings=tuple(findings))
    page = render_html(doc, corpus)
    assert "<script>alert" not in page
    assert "&lt;script&gt;alert(&#x27;x&#x27;)&lt;/script&gt; &amp; more" in page


def test_rendering_without_a_corpus_omits_source_pages(golden_doc, corpus):
    with_pages = render_html(golden_doc, corpus)
    without = render_html(golden_doc)
    assert "Source pages" in with_pages
    assert "Source pages" not in without


def test_rendering_links_records_together(golden_doc, corpus):
    page = render_html(golden_doc, corpus)
    assert 'id="finding-f001-01"' in page
    assert 'id="group-PF1"' in page
    assert 'id="lever-lv01"' in page
    assert 'id="step-st01"' in page
    assert 'href="#page-001"' in page
    assert "badge-high" in page
    assert "Audit trail" in page


def test_rendering_an_empty_document_says_so():
    doc = ResultDocument(
        source="empty.pdf",
        generated_at=FROZEN_TIMESTAMP,
        micro_findings=(),
        grouped_issues={},
        meso_levers=(),
        macro_plan=(),
        provenance={},
    )
    page = render_html(doc)
    assert "No findings." in page
    assert page.endswith("</html>\n")
