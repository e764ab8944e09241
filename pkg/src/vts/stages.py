"""On-disk pipeline stages shared by the CLI and the evaluation harness.

Layout under a working directory:

    pages/page_{nnn}.yaml + page_{nnn}.png + ingest_report.yaml
    vts_results/current_micro_analysis_vts.yaml   (grouped_issues added by the group stage)
    vts_results/current_meso_analysis_vts.yaml
    vts_results/current_macro_analysis_vts.yaml
    result.yaml + result.html                     (consolidate stage)

Each stage reads only its predecessors' files, so every tier can be
re-run independently.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import yaml

from vts import canonical
from vts.config import PipelineConfig
from vts.consolidation import consolidate, render_html
from vts.errors import SchemaViolation
from vts.evidence import Finding, IssueGroup, PageRecord, ResultDocument
from vts.grouping import (
    CategoryTaxonomy,
    DEFAULT_TAXONOMY,
    GroupingResult,
    group_findings,
    load_taxonomy,
)
from vts.ingestion import IngestReport, ingest_document, load_pages
from vts.observers import (
    ObserverOutput,
    observer_output_from_dict,
    observer_output_to_dict,
    observer_output_to_yaml,
    run_macro,
    run_meso,
    run_micro,
)
from vts.providers import ProviderSession

RESULTS_DIR = "vts_results"
PAGES_DIR = "pages"


def pages_dir(workdir: str | Path) -> Path:
    return Path(workdir) / PAGES_DIR

def results_dir(workdir: str | Path) -> Path:
    return Path(workdir) / RESULTS_DIR


def stage_file(workdir: str | Path, level: str) -> Path:
    return results_dir(workdir) / f"current_{level}_analysis_vts.yaml"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _require_file(path: Path, hint: str) -> str:
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found — {hint}")
    return path.read_text(encoding="utf-8")


def resolve_taxonomy(config: PipelineConfig, override: str | Path | None = None) -> CategoryTaxonomy:
    path = Path(override) if override else config.taxonomy
    return load_taxonomy(path) if path else DEFAULT_TAXONOMY


def stage_ingest(
    pdf_path: str | Path,
    workdir: str | Path,
    config: PipelineConfig,
    session: ProviderSession,
    dpi: int | None = None,
) -> IngestReport:
    return ingest_document(
        pdf_path,
        pages_dir(workdir),
        session,
        dpi=dpi or config.ingest.dpi,
        rasterizer_cmd=config.ingest.rasterizer_cmd,
        parallelism=config.parallelism,
        max_pages=config.ingest.max_pages,
    )


def load_corpus(workdir: str | Path) -> list[PageRecord]:
    pages = load_pages(pages_dir(workdir))
    if not pages:
        raise FileNotFoundError(
            f"no page records under {pages_dir(workdir)} — run `vts ingest` first"
        )
    return pages


def stage_micro(
    workdir: str | Path,
    config: PipelineConfig,
    session: ProviderSession,
    pages_from: str | Path | None = None,
) -> ObserverOutput:
    if pages_from:
        pages = load_pages(pages_from)
        if not pages:
            raise FileNotFoundError(f"no page records under {pages_from}")
    else:
        pages = load_corpus(workdir)
    output = run_micro(
        pages, session, prompts_dir=config.prompts_dir, parallelism=config.parallelism
    )
    _write(stage_file(workdir, "micro"), observer_output_to_yaml(output))
    return output


def load_micro_stage(
    workdir: str | Path,
) -> tuple[ObserverOutput, dict[str, tuple[IssueGroup, ...]] | None]:
    """The micro stage file, plus its grouped issues when already grouped."""
    path = stage_file(workdir, "micro")
    text = _require_file(path, "run `vts analyze micro` first")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaViolation(path.name, f"not valid YAML: {exc}")
    if not isinstance(data, Mapping):
        raise SchemaViolation(path.name, "stage file must be a mapping")
    output = observer_output_from_dict(data, path.name)
    groups = None
    if "grouped_issues" in data:
        groups = canonical.grouped_issues_from_dict(data["grouped_issues"], path.name)
    return output, groups


def stage_group(
    workdir: str | Path, taxonomy: CategoryTaxonomy = DEFAULT_TAXONOMY
) -> GroupingResult:
    """Group the micro findings and fold the result into the micro stage file."""
    output, _ = load_micro_stage(workdir)
    grouping = group_findings(output.records, taxonomy)
    data: dict[str, Any] = {
        "grouped_issues": canonical.grouped_issues_to_dict(grouping.groups),
        **observer_output_to_dict(output),
    }
    data["findings"] = [
        canonical.finding_to_dict(f) for f in sorted(grouping.findings, key=lambda f: f.id)
    ]
    _write(stage_file(workdir, "micro"), canonical.yaml_dump(data))
    return grouping


def _require_grouped(
    workdir: str | Path,
) -> tuple[ObserverOutput, dict[str, tuple[IssueGroup, ...]]]:
    output, groups = load_micro_stage(workdir)
    if groups is None:
        raise FileNotFoundError(
            f"{stage_file(workdir, 'micro')} has no grouped_issues — run `vts group` first"
        )
    return output, groups


def stage_meso(
    workdir: str | Path, config: PipelineConfig, session: ProviderSession
) -> ObserverOutput:
    output, groups = _require_grouped(workdir)
    meso = run_meso(groups, output.records, config.org, session, config.prompts_dir)
    _write(stage_file(workdir, "meso"), observer_output_to_yaml(meso))
    return meso


def load_observer_stage(workdir: str | Path, level: str, hint: str) -> ObserverOutput:
    path = stage_file(workdir, level)
    text = _require_file(path, hint)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaViolation(path.name, f"not valid YAML: {exc}")
    return observer_output_from_dict(data, path.name)


def stage_macro(
    workdir: str | Path,
    config: PipelineConfig,
    session: ProviderSession,
    history: Sequence[ResultDocument] = (),
) -> ObserverOutput:
    meso = load_observer_stage(workdir, "meso", "run `vts analyze meso` first")
    macro = run_macro(
        meso.records,
        history=history,
        org=config.org,
        session=session,
        discount_rate=config.discount_rate,
        prompts_dir=config.prompts_dir,
    )
    _write(stage_file(workdir, "macro"), observer_output_to_yaml(macro))
    return macro


def stage_consolidate(
    workdir: str | Path, out_dir: str | Path, generated_at: str
) -> ResultDocument:
    pages = load_corpus(workdir)
    micro, groups = _require_grouped(workdir)
    meso = load_observer_stage(workdir, "meso", "run `vts analyze meso` first")
    macro = load_observer_stage(workdir, "macro", "run `vts analyze macro` first")
    source = pages[0].source if pages else "unknown"
    doc = consolidate(
        micro.records,
        groups,
        meso.records,
        macro.records,
        pages,
        source=source,
        generated_at=generated_at,
    )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write(out_dir / "result.yaml", canonical.canonical_serialize(doc))
    _write(out_dir / "result.html", render_html(doc, pages))
    return doc


def run_pipeline(
    pdf_path: str | Path,
    workdir: str | Path,
    config: PipelineConfig,
    session: ProviderSession,
    taxonomy: CategoryTaxonomy = DEFAULT_TAXONOMY,
    generated_at: str = "",
) -> ResultDocument:
    """All stages back to back in one working directory."""
    from vts.consolidation import FROZEN_TIMESTAMP

    stage_ingest(pdf_path, workdir, config, session)
    stage_micro(workdir, config, session)
    stage_group(workdir, taxonomy)
    stage_meso(workdir, config, session)
    stage_macro(workdir, config, session)
    return stage_consolidate(workdir, workdir, generated_at or FROZEN_TIMESTAMP)
