"""Record the replay fixture pack and golden artifacts for the test suite.

A scripted in-process model stands in for the real provider: it keys its
replies off the request content (page image for extraction, page number
for the per-page pass, listing contents for the planning tiers) and is
wrapped in the recording transport so every request/reply lands in
``tests/fixtures/replies/`` keyed by request hash.  The same script then
drives a curation round (discard one finding, re-plan) and the one-shot
comparison so those fixtures are captured too.

Run from the repository root:

    python3 tools/make_fixture_pdf.py
    python3 tools/make_fixtures.py
"""

from __future__ import annotations

import hashlib
import re
import shutil
import sys
import tempfile
from pathlib import Path

from vts.canonical import canonical_serialize, parse_result_document
from vts.config import load_config
from vts.consolidation import FROZEN_TIMESTAMP, render_html
from vts.evaluation import run_comparison
from vts.grouping import DEFAULT_TAXONOMY
from vts.ingestion import load_pages, rasterize_document
from vts.providers import (
    Budget,
    ModelRequest,
    ModelResponse,
    ProviderSession,
    RecordProvider,
    ResponseFormat,
)
from vts.review import DecisionAction, ReviewDecision, recalibrate
from vts.stages import run_pipeline

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"
REPLIES = FIXTURES / "replies"
GOLDEN = ROOT / "tests" / "golden"
PDF = FIXTURES / "report.pdf"
CONFIG = FIXTURES / "vts.yaml"

EPOCH = "1970-01-01T00:00:00Z"

# --- scripted replies ---------------------------------------------------

EXTRACTION_REPLIES = {
    "001": (
        "elements:\n"
        "  - kind: text\n"
        "    bbox: [40, 40, 572, 90]\n"
        '    content: "Quarterly Performance Review — prepared for the executive committee, fiscal Q3."\n'
        "  - kind: text\n"
        "    bbox: [40, 120, 572, 180]\n"
        '    content: "Revenue held flat quarter over quarter while operating margin compressed to 4.1% on rising input costs."\n'
        "  - kind: table\n"
        "    bbox: [40, 220, 572, 420]\n"
        '    csv: "Metric,Q2,Q3\\nRevenue (USD K),12450,12480\\nOperating margin,6.8%,4.1%\\nNet profit (USD K),310,-668.5"\n'
    ),
    "002": (
        "elements:\n"
        "  - kind: text\n"
        "    bbox: [40, 40, 572, 100]\n"
        '    content: "Profitability deteriorated sharply. Interest and tax expenses remain high relative to peers, and margins show no recovery signal."\n'
        "  - kind: table\n"
        "    bbox: [40, 140, 572, 320]\n"
        '    csv: "Line,Q3\\nEBITDA (USD K),142\\nInterest expense (USD K),380\\nNet profit (USD K),-668.5"\n'
    ),
    "003": (
        "elements:\n"
        "  - kind: text\n"
        "    bbox: [40, 40, 572, 100]\n"
        '    content: "Client survey results: the Technology Offering score fell to 63% this cycle, down from 71% a year ago."\n'
        "  - kind: figure\n"
        "    bbox: [40, 140, 572, 400]\n"
        '    caption: "Figure 7: Win rate by segment, declining in Large Corporate while Small Business holds steady."\n'
    ),
    "004": (
        "elements:\n"
        "  - kind: text\n"
        "    bbox: [40, 40, 572, 100]\n"
        '    content: "Employee satisfaction dropped to 58% in the latest pulse survey, with workload cited most often."\n'
        "  - kind: text\n"
        "    bbox: [40, 140, 572, 200]\n"
        '    content: "Field staffing remained below plan for the third consecutive month, leaving regional teams stretched."\n'
    ),
    "005": (
        "elements:\n"
        "  - kind: text\n"
        "    bbox: [40, 40, 572, 90]\n"
        '    content: "Appendix A lists the data sources and collection windows used throughout this report."\n'
    ),
}

MICRO_REPLIES = {
    "001": (
        "findings:\n"
        '  - title: "Operating margin compression accelerating"\n'
        '    description: "Margin fell from 6.8% to 4.1% in a single quarter on rising input costs."\n'
        "    severity: High\n"
        "    page_reference: '001'\n"
        "    element_id: p001-e02\n"
        '    excerpt: "operating margin compressed to 4.1%"\n'
        "    bbox: [40, 120, 572, 180]\n"
    ),
    "002": (
        "findings:\n"
        '  - title: "Negative net profit for the quarter"\n'
        "    description: \"Net profit swung to -668.5 thousand USD, erasing the prior quarter's gain.\"\n"
        "    severity: High\n"
        "    page_reference: '002'\n"
        "    element_id: p002-e02\n"
        "    excerpt: '-668.5'\n"
        "    bbox: [40, 140, 572, 320]\n"
        '  - title: "Interest and tax expenses remain high"\n'
        '    description: "Fixed financial charges keep margins suppressed even when gross performance recovers."\n'
        "    severity: Medium\n"
        "    page_reference: '002'\n"
        "    element_id: p002-e01\n"
        '    excerpt: "Interest and tax expenses remain high"\n'
        "    bbox: [40, 40, 572, 100]\n"
    ),
    "003": (
        "findings:\n"
        '  - title: "Technology Offering score fell to 63%"\n'
        '    description: "Clients rate the technology offering lower for the second consecutive cycle."\n'
        "    severity: Medium\n"
        "    page_reference: '003'\n"
        "    element_id: p003-e01\n"
        '    excerpt: "Technology Offering score fell to 63%"\n'
        "    bbox: [40, 40, 572, 100]\n"
        '  - title: "Win rate declining in Large Corporate segment"\n'
        '    description: "Competitive win rate is eroding in the highest-value client segment."\n'
        "    severity: High\n"
        "    page_reference: '003'\n"
        "    element_id: p003-e02\n"
        '    excerpt: "declining in Large Corporate"\n'
        "    bbox: [40, 140, 572, 400]\n"
    ),
    "004": (
        "findings:\n"
        '  - title: "Employee satisfaction dropped to 58%"\n'
        '    description: "Pulse survey sentiment fell nine points, with workload the leading driver."\n'
        "    severity: Medium\n"
        "    page_reference: '004'\n"
        "    element_id: p004-e01\n"
        '    excerpt: "satisfaction dropped to 58%"\n'
        "    bbox: [40, 40, 572, 100]\n"
        '  - title: "Staffing below plan in the field"\n'
        '    description: "Chronic understaffing leaves regional teams stretched thin and strains morale."\n'
        "    severity: Low\n"
        "    page_reference: '004'\n"
        "    element_id: p004-e02\n"
        '    excerpt: "staffing remained below plan"\n'
        "    bbox: [40, 140, 572, 200]\n"
    ),
    "005": "findings: []\n",
}

LINK_REPLY = (
    "links:\n"
    "  - [f001-01, f002-01]\n"
    "  - [f002-01, f002-02]\n"
    "  - [f003-01, f003-02]\n"
    "  - [f004-01, f004-02]\n"
)

_PRICING_LEVER = (
    '  - lever_name: "pricing"\n'
    "    target:\n"
    '      metric: "operating margin"\n'
    "      value: 7.0\n"
    '      unit: "%"\n'
    "    steps:\n"
    '      - "Audit discount ladders across the top fifty accounts"\n'
    '      - "Set quarterly price floors for loss-making lines"\n'
    "    resources:\n"
    "      budget: 120000.0\n"
    '      currency: "USD"\n'
    "      headcount: 2\n"
    '    synergy_notes: "Firmer pricing protects the margin the marketing push must defend."\n'
    '    tradeoff_notes: "Price moves may cost marginal deals in price-sensitive accounts."\n'
    "    evidence_links: [f001-01, f002-01]\n"
)

_MARKETING_LEVER = (
    '  - lever_name: "marketing"\n'
    "    target:\n"
    '      metric: "Large Corporate win rate"\n'
    "      value: 30.0\n"
    '      unit: "%"\n'
    "    steps:\n"
    '      - "Refresh the Large Corporate value proposition"\n'
    '      - "Fund two competitive-displacement campaigns"\n'
    "    resources:\n"
    "      budget: 200000.0\n"
    '      currency: "USD"\n'
    "      headcount: 3\n"
    '    synergy_notes: "Win-rate recovery compounds the pricing lever\'s margin gains."\n'
    '    tradeoff_notes: "Campaign spend draws down the discretionary budget envelope."\n'
    "    evidence_links: [f003-01, f003-02]\n"
)

_STAFFING_LEVER = (
    '  - lever_name: "staffing"\n'
    "    target:\n"
    '      metric: "field staffing fill rate"\n'
    "      value: 95.0\n"
    '      unit: "%"\n'
    "    steps:\n"
    '      - "Reopen the regional hiring pipeline"\n'
    '      - "Pre-approve contractor backfill for peak load"\n'
    "    resources:\n"
    "      budget: 150000.0\n"
    '      currency: "USD"\n'
    "      headcount: 4\n"
    '    synergy_notes: "Restored field capacity underpins delivery on renewed accounts."\n'
    '    tradeoff_notes: "Hiring spend reduces near-term operating margin."\n'
    "    evidence_links: [f004-02]\n"
)

MESO_REPLY = "levers:\n" + _PRICING_LEVER + _MARKETING_LEVER + _STAFFING_LEVER
RECAL_MESO_REPLY = "levers:\n" + _PRICING_LEVER + _MARKETING_LEVER

_MARGIN_STEP = (
    '  - initiative: "Margin defense program"\n'
    "    sequence_index: 1\n"
    "    start_quarter: 1\n"
    "    cashflows: [-180000.0, 60000.0, 120000.0, 150000.0]\n"
    '    risk_note: "Price moves may accelerate churn in price-sensitive accounts; stage the rollout and watch win rate monthly."\n'
    "    lever_links: [lv01, lv02]\n"
)

_CAPACITY_STEP = (
    '  - initiative: "Field capacity rebuild"\n'
    "    sequence_index: 2\n"
    "    start_quarter: 2\n"
    "    cashflows: [-90000.0, 30000.0, 60000.0]\n"
    '    risk_note: "Hiring pipelines may lag the plan; pre-approved contractor backfill caps the exposure."\n'
    "    lever_links: [lv03]\n"
)

MACRO_REPLY = "steps:\n" + _MARGIN_STEP + _CAPACITY_STEP
RECAL_MACRO_REPLY = "steps:\n" + _MARGIN_STEP

ONE_SHOT_REPLY = (
    "Summary of the most important findings in the report:\n"
    "\n"
    '- High: profitability collapsed — net profit hit "-668.5" thousand USD on page 2.\n'
    '- High: operating margin fell sharply (page 1): "operating margin compressed to 4.1%".\n'
    '- Medium: the Technology Offering score slipped (page 3): "Technology Offering score fell to 63%".\n'
    "- Employee satisfaction dropped to 58% and field staffing ran below plan (page 4).\n"
    "\n"
    "Recommended focus for next quarter: defend margin through pricing\n"
    "discipline, refresh the Large Corporate value proposition, and rebuild\n"
    "field capacity.\n"
)

_MICRO_PAGE_RE = re.compile(r"Examine page (\d{3}) of the report")


class ScriptedProvider:
    """Deterministic stand-in model keyed off request content."""

    def __init__(self, page_by_image: dict[str, str]):
        self.page_by_image = page_by_image

    def send(self, request: ModelRequest) -> ModelResponse:
        text = self._reply(request)
        return ModelResponse(
            text=text,
            input_tokens=len(request.user_prompt) // 4 + 800 * len(request.images),
            output_tokens=len(text) // 4,
            latency_ms=0,
        )

    def _reply(self, request: ModelRequest) -> str:
        user = request.user_prompt
        if request.response_format is ResponseFormat.TEXT:
            return ONE_SHOT_REPLY
        if user.startswith("Extract every element"):
            digest = hashlib.sha256(request.images[0]).hexdigest()
            return EXTRACTION_REPLIES[self.page_by_image[digest]]
        match = _MICRO_PAGE_RE.search(user)
        if match:
            return MICRO_REPLIES[match.group(1)]
        if user.startswith("Here are the accepted findings"):
            return LINK_REPLY
        if "The grouped issues from the report" in user:
            return MESO_REPLY if "f004-02" in user else RECAL_MESO_REPLY
        if "The action levers proposed for the report" in user:
            return MACRO_REPLY if "lv03" in user else RECAL_MACRO_REPLY
        raise AssertionError(f"unscripted request: {user[:120]!r}")


def main() -> None:
    config = load_config(CONFIG)
    if REPLIES.exists():
        shutil.rmtree(REPLIES)
    REPLIES.mkdir(parents=True)
    GOLDEN.mkdir(parents=True, exist_ok=True)

    raster = rasterize_document(PDF, dpi=config.ingest.dpi)
    scripted = ScriptedProvider(
        {hashlib.sha256(p.png).hexdigest(): p.page for p in raster}
    )

    def record_session() -> ProviderSession:
        return ProviderSession(
            provider=RecordProvider(scripted, REPLIES),
            budget=Budget(
                config.budget.max_requests, config.budget.max_total_tokens
            ),
            model="vts-default",
        )

    with tempfile.TemporaryDirectory(prefix="vts-fixtures-") as tmp:
        workdir = Path(tmp) / "run"
        doc = run_pipeline(PDF, workdir, config, record_session())
        (GOLDEN / "result.yaml").write_bytes((workdir / "result.yaml").read_bytes())
        (GOLDEN / "result.html").write_bytes((workdir / "result.html").read_bytes())
        print(f"pipeline: {len(doc.micro_findings)} findings, {len(doc.meso_levers)} levers")

        # Curation round: keep six findings, drop the staffing one, re-plan.
        pages = load_pages(workdir / "pages")
        base = parse_result_document((GOLDEN / "result.yaml").read_text("utf-8"))
        order = [
            "f001-01", "f002-01", "f002-02", "f003-01", "f003-02", "f004-01",
        ]
        decisions = [
            ReviewDecision(
                finding_id=fid,
                action=DecisionAction.ACCEPT,
                reviewer="lead-analyst",
                seq=i,
                at=EPOCH,
            )
            for i, fid in enumerate(order, start=1)
        ] + [
            ReviewDecision(
                finding_id="f004-02",
                action=DecisionAction.DISCARD,
                reviewer="lead-analyst",
                seq=7,
                at=EPOCH,
                note="tracked in the workforce plan instead",
            )
        ]
        recal = recalibrate(
            base,
            decisions,
            pages,
            record_session(),
            config.org,
            taxonomy=DEFAULT_TAXONOMY,
            discount_rate=config.discount_rate,
            generated_at=FROZEN_TIMESTAMP,
        )
        (GOLDEN / "recal_result.yaml").write_text(
            canonical_serialize(recal), encoding="utf-8", newline="\n"
        )
        (GOLDEN / "recal_result.html").write_text(
            render_html(recal, pages), encoding="utf-8", newline="\n"
        )
        print(f"recalibrated: {len(recal.micro_findings)} findings, {len(recal.meso_levers)} levers")

        # Comparison run: one-shot arm plus a second full pipeline pass.
        cmp_dir = Path(tmp) / "cmp"
        report = run_comparison(
            PDF, cmp_dir, config, record_session, frozen_clock=True
        )
        (GOLDEN / "comparison.yaml").write_bytes(
            (cmp_dir / "comparison.yaml").read_bytes()
        )
        if report.oneshot is None or report.pipeline is None:
            raise AssertionError("comparison arm failed during recording")

    names = sorted(p.name for p in REPLIES.glob("*.json"))
    print(f"recorded {len(names)} replies:")
    for name in names:
        print(f"  {name}")


if __name__ == "__main__":
    sys.exit(main())
