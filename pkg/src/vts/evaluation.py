"""Evaluation harness: forecast direction/gap scoring with display
rounding, information-density reporting, and the one-shot-vs-pipeline
comparison run."""

from __future__ import annotations

import re
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any

from vts import canonical
from vts.config import PipelineConfig
from vts.consolidation import FROZEN_TIMESTAMP
from vts.errors import VtsError
from vts.evidence import PAGE_REF_RE, Finding, ResultDocument
from vts.grouping import DEFAULT_TAXONOMY, CategoryTaxonomy
from vts.ingestion import rasterize_document
from vts.providers import ModelRequest, ResponseFormat
from vts.stages import run_pipeline

ONE_SHOT_PROMPT = (
    "Read this document page by page, highlight findings related to negative "
    "business performance, show evidence, and offer suggestions."
)


# --- forecast scoring ---------------------------------------------------


@dataclass(frozen=True)
class PredictionRange:
    low: float
    high: float
    mid: float | None = None
    unit: str = ""
    baseline: float | None = None

    def __post_init__(self) -> None:
        if self.mid is None:
            object.__setattr__(self, "mid", (self.low + self.high) / 2.0)
        if not self.low <= self.mid <= self.high:
            raise ValueError(
                f"prediction range must satisfy low <= mid <= high, "
                f"got {self.low} <= {self.mid} <= {self.high}"
            )


@dataclass(frozen=True)
class ForecastScore:
    inside_range: bool
    gap_mid: float
    gap_nearest: float
    gap_range: tuple[float, float]
    gap_mid_pct: float | None = None
    direction_correct: bool | None = None

    def __post_init__(self) -> None:
        if self.inside_range != (self.gap_nearest == 0):
            raise ValueError("inside_range must hold exactly when gap_nearest is 0")
        if self.gap_range[0] > self.gap_range[1]:
            raise ValueError("gap_range components must be ordered")


def _direction(delta: float, epsilon: float) -> int:
    if abs(delta) <= epsilon:
        return 0
    return 1 if delta > 0 else -1


def score_forecast(
    pred: PredictionRange, actual: float, epsilon: float = 0.0
) -> ForecastScore:
    """Gap and direction arithmetic: every gap is actual − prediction."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    gap_mid = actual - pred.mid
    gap_mid_pct = (gap_mid / pred.mid * 100.0) if pred.mid != 0 else None
    if pred.low <= actual <= pred.high:
        gap_nearest = 0.0
    elif actual > pred.high:
        gap_nearest = actual - pred.high
    else:
        gap_nearest = actual - pred.low
    direction_correct = None
    if pred.baseline is not None:
        predicted = _direction(pred.mid - pred.baseline, epsilon)
        observed = _direction(actual - pred.baseline, epsilon)
        direction_correct = predicted == observed
    return ForecastScore(
        inside_range=gap_nearest == 0.0,
        gap_mid=gap_mid,
        gap_mid_pct=gap_mid_pct,
        gap_nearest=gap_nearest,
        gap_range=(actual - pred.high, actual - pred.low),
        direction_correct=direction_correct,
    )


def round_half_away(value: float, decimals: int) -> str:
    """Round half away from zero to a fixed number of decimals, as text."""
    quantum = Decimal(1).scaleb(-decimals)
    return str(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def score_to_dict(score: ForecastScore) -> dict[str, Any]:
    """Score plus display strings at the precision used for reporting:
    midpoint gap to one decimal, everything else to whole units."""
    data: dict[str, Any] = {
        "inside_range": score.inside_range,
        "gap_mid": score.gap_mid,
    }
    if score.gap_mid_pct is not None:
        data["gap_mid_pct"] = score.gap_mid_pct
    data["gap_nearest"] = score.gap_nearest
    data["gap_range"] = list(score.gap_range)
    if score.direction_correct is not None:
        data["direction_correct"] = score.direction_correct
    display: dict[str, Any] = {"gap_mid": round_half_away(score.gap_mid, 1)}
    if score.gap_mid_pct is not None:
        display["gap_mid_pct"] = round_half_away(score.gap_mid_pct, 0)
    display["gap_nearest"] = round_half_away(score.gap_nearest, 0)
    display["gap_range"] = [round_half_away(g, 0) for g in score.gap_range]
    data["display"] = display
    return data


# --- information density ------------------------------------------------


@dataclass(frozen=True)
class DensityReport:
    total_findings: int
    with_page_ref: int
    with_excerpt: int
    with_severity: int
    with_links: int
    density: float
    wall_time_ms: int

    def __post_init__(self) -> None:
        for name in ("with_page_ref", "with_excerpt", "with_severity", "with_links"):
            if not 0 <= getattr(self, name) <= self.total_findings:
                raise ValueError(f"{name} must be within 0..total_findings")
        if not 0.0 <= self.density <= 1.0:
            raise ValueError("density must be in [0, 1]")

    def as_dict(self) -> dict[str, Any]:
        return {
            "total_findings": self.total_findings,
            "with_page_ref": self.with_page_ref,
            "with_excerpt": self.with_excerpt,
            "with_severity": self.with_severity,
            "with_links": self.with_links,
            "density": self.density,
            "wall_time_ms": self.wall_time_ms,
        }


_SEVERITY_WORDS = {"High", "Medium", "Low"}


def _traits(finding: Finding | Mapping[str, Any]) -> tuple[bool, bool, bool, bool]:
    if isinstance(finding, Finding):
        page = bool(PAGE_REF_RE.match(finding.page_reference))
        excerpt = bool(finding.excerpt)
        severity = True
        links = bool(finding.links)
    else:
        page = bool(PAGE_REF_RE.match(str(finding.get("page_reference") or "")))
        excerpt = bool(finding.get("excerpt"))
        severity = str(finding.get("severity") or "") in _SEVERITY_WORDS
        links = bool(finding.get("links"))
    return page, excerpt, severity, links


def density_report(
    findings: ResultDocument | Sequence[Finding | Mapping[str, Any]],
    wall_time_ms: int = 0,
) -> DensityReport:
    """Count evidence traits over micro findings; density = all four."""
    items: Sequence[Finding | Mapping[str, Any]]
    items = findings.micro_findings if isinstance(findings, ResultDocument) else findings
    counts = [0, 0, 0, 0]
    complete = 0
    for item in items:
        traits = _traits(item)
        for position, present in enumerate(traits):
            counts[position] += int(present)
        complete += int(all(traits))
    total = len(items)
    return DensityReport(
        total_findings=total,
        with_page_ref=counts[0],
        with_excerpt=counts[1],
        with_severity=counts[2],
        with_links=counts[3],
        density=(complete / total) if total else 0.0,
        wall_time_ms=wall_time_ms,
    )


# --- one-shot baseline parsing ------------------------------------------

_BULLET_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+(?P<body>.+)$")
_PAGE_WORD_RE = re.compile(r"\bpage\s+(\d{1,3})\b", re.IGNORECASE)
_QUOTE_RE = re.compile(r"\"([^\"]+)\"|“([^”]+)”")


def parse_oneshot_reply(text: str) -> list[dict[str, Any]]:
    """Best-effort conversion of a prose reply into loose finding records.

    Each bullet (or numbered) line becomes one record; severity words,
    `page N` mentions, and double-quoted spans are lifted when present.
    """
    findings = []
    for line in text.splitlines():
        match = _BULLET_RE.match(line)
        if not match:
            continue
        body = match.group("body").strip()
        if not body:
            continue
        severity = next((word for word in _SEVERITY_WORDS if word in body), None)
        page_match = _PAGE_WORD_RE.search(body)
        quote_match = _QUOTE_RE.search(body)
        excerpt = ""
        if quote_match:
            excerpt = quote_match.group(1) or quote_match.group(2) or ""
        title = re.split(r"[.:;]", body, maxsplit=1)[0].strip()
        findings.append(
            {
                "title": title or body,
                "description": body,
                "severity": severity,
                "page_reference": page_match.group(1).zfill(3) if page_match else None,
                "excerpt": excerpt,
                "links": [],
            }
        )
    return findings


# --- comparison run -----------------------------------------------------


@dataclass(frozen=True)
class ComparisonReport:
    oneshot: DensityReport | None
    pipeline: DensityReport | None
    oneshot_error: str = ""
    pipeline_error: str = ""

    def as_dict(self) -> dict[str, Any]:
        return {
            "oneshot": self.oneshot.as_dict() if self.oneshot else {"error": self.oneshot_error},
            "pipeline": (
                self.pipeline.as_dict() if self.pipeline else {"error": self.pipeline_error}
            ),
        }


def run_comparison(
    pdf_path: str | Path,
    out_dir: str | Path,
    config: PipelineConfig,
    make_session,
    taxonomy: CategoryTaxonomy | None = None,
    frozen_clock: bool = False,
) -> ComparisonReport:
    """Run both evaluation arms; a failure in one leaves the other intact.

    ``make_session`` is called once per arm so each runs under its own
    budget reservation.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    oneshot = pipeline = None
    oneshot_error = pipeline_error = ""

    started = time.monotonic()
    try:
        session = make_session()
        rasters = rasterize_document(
            pdf_path,
            dpi=config.ingest.dpi,
            rasterizer_cmd=config.ingest.rasterizer_cmd,
            max_pages=config.ingest.max_pages,
        )
        request = ModelRequest(
            model=session.model,
            system_prompt="",
            user_prompt=ONE_SHOT_PROMPT,
            images=tuple(raster.png for raster in rasters),
            response_format=ResponseFormat.TEXT,
            max_output_tokens=4096,
        )
        response = session.complete(request)
        records = parse_oneshot_reply(response.text)
        elapsed_ms = 0 if frozen_clock else int((time.monotonic() - started) * 1000)
        oneshot = density_report(records, wall_time_ms=elapsed_ms)
        (out_dir / "oneshot_reply.txt").write_text(
            response.text, encoding="utf-8", newline="\n"
        )
    except (VtsError, OSError, ValueError) as exc:
        oneshot_error = f"{type(exc).__name__}: {exc}"

    started = time.monotonic()
    try:
        session = make_session()
        doc = run_pipeline(
            pdf_path,
            out_dir / "pipeline",
            config,
            session,
            taxonomy=taxonomy or DEFAULT_TAXONOMY,
            generated_at=FROZEN_TIMESTAMP if frozen_clock else _now_utc(),
        )
        elapsed_ms = 0 if frozen_clock else int((time.monotonic() - started) * 1000)
        pipeline = density_report(doc, wall_time_ms=elapsed_ms)
    except (VtsError, OSError, ValueError) as exc:
        pipeline_error = f"{type(exc).__name__}: {exc}"

    report = ComparisonReport(
        oneshot=oneshot,
        pipeline=pipeline,
        oneshot_error=oneshot_error,
        pipeline_error=pipeline_error,
    )
    (out_dir / "comparison.yaml").write_text(
        canonical.yaml_dump(report.as_dict()), encoding="utf-8", newline="\n"
    )
    return report


def _now_utc() -> str:
    from datetime import datetime, timezone

    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
