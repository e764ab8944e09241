"""Generate the five-page sample report PDF used by the test suite.

The visible text mirrors the structured page records the replay
fixtures return, so a human flipping through the rendered pages sees
the same story the pipeline extracts.  ``invariant=1`` makes reportlab
emit byte-identical output on every run.
"""

from __future__ import annotations

from pathlib import Path

from reportlab.lib.pagesizes import letter
from reportlab.pdfgen import canvas as pdf_canvas

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "report.pdf"

PAGES: list[list[str]] = [
    [
        "Quarterly Performance Review",
        "Prepared for the executive committee, fiscal Q3.",
        "",
        "Revenue held flat quarter over quarter while operating margin",
        "compressed to 4.1% on rising input costs.",
        "",
        "Metric              Q2        Q3",
        "Revenue (USD K)     12450     12480",
        "Operating margin    6.8%      4.1%",
        "Net profit (USD K)  310       -668.5",
    ],
    [
        "Profitability deteriorated sharply. Interest and tax expenses",
        "remain high relative to peers, and margins show no recovery signal.",
        "",
        "Line                      Q3",
        "EBITDA (USD K)            142",
        "Interest expense (USD K)  380",
        "Net profit (USD K)        -668.5",
    ],
    [
        "Client survey results: the Technology Offering score fell to 63%",
        "this cycle, down from 71% a year ago.",
        "",
        "Figure 7: Win rate by segment, declining in Large Corporate",
        "while Small Business holds steady.",
    ],
    [
        "Employee satisfaction dropped to 58% in the latest pulse survey,",
        "with workload cited most often.",
        "",
        "Field staffing remained below plan for the third consecutive",
        "month, leaving regional teams stretched.",
    ],
    [
        "Appendix A lists the data sources and collection windows used",
        "throughout this report.",
    ],
]


def main() -> None:
    OUT.parent.mkdir(parents=True, exist_ok=True)
    canvas = pdf_canvas.Canvas(str(OUT), pagesize=letter, invariant=1)
    canvas.setTitle("Quarterly Performance Review")
    for lines in PAGES:
        canvas.setFont("Helvetica", 11)
        y = 740.0
        for line in lines:
            canvas.drawString(48, y, line)
            y -= 18
        canvas.showPage()
    canvas.save()
    print(f"wrote {OUT} ({OUT.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
