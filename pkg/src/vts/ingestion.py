"""PDF ingestion: rasterize pages to PNG, then extract structured elements.

Rasterization is delegated to an external tool through a small
command-template contract, so any renderer that can produce numbered
PNGs works. Extraction sends each page image to the vision model and
parses the returned YAML fragment into a validated PageRecord.
"""

from __future__ import annotations

import shlex
import struct
import subprocess
import sys
import tempfile
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import json

from vts import canonical
from vts.errors import (
    CorruptPdf,
    ExtractionFailed,
    MalformedResponse,
    PageLimitExceeded,
    RasterizerUnavailable,
    SchemaViolation,
)
from vts.evidence import BBox, ElementKind, PageElement, PageRecord, page_ref
from vts.providers import ModelRequest, ProviderSession, ResponseFormat

DEFAULT_RASTERIZER_CMD = "{python} -m vts.raster_stub {pdf} --dpi {dpi} --out {outdir}"
MAX_DOCUMENT_PAGES = 999

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

EXTRACTION_SYSTEM = (
    "You are a meticulous document parser. You convert one page image of a "
    "business report into structured YAML and never invent content that is "
    "not visible on the page."
)

EXTRACTION_USER = (
    "Extract every element from this page image.\n"
    "\n"
    "Respond with YAML only, shaped exactly like:\n"
    "\n"
    "elements:\n"
    "  - kind: text\n"
    "    bbox: [x0, y0, x1, y1]\n"
    "    content: the verbatim text\n"
    "  - kind: table\n"
    "    bbox: [x0, y0, x1, y1]\n"
    "    csv: the table serialized as CSV\n"
    "  - kind: figure\n"
    "    bbox: [x0, y0, x1, y1]\n"
    "    caption: the figure caption\n"
    "\n"
    "Rules: every element carries kind, bbox in pixel coordinates, and its "
    "payload (content for text, csv for table, caption for figure). Copy text "
    "verbatim. A page with no recognizable elements is `elements: []`."
)

_RETRY_NOTE = (
    "\n\nYour previous reply could not be parsed ({reason}). "
    "Respond again with valid YAML in exactly the requested shape."
)


@dataclass(frozen=True)
class RasterPage:
    page: str
    png: bytes
    dpi: int
    width_px: int
    height_px: int
    render_ms: int

    def __post_init__(self) -> None:
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("raster dimensions must be positive")
        if self.dpi <= 0:
            raise ValueError("dpi must be positive")


def png_dimensions(blob: bytes) -> tuple[int, int]:
    """Read (width, height) from a PNG IHDR chunk."""
    if len(blob) < 24 or not blob.startswith(_PNG_SIGNATURE) or blob[12:16] != b"IHDR":
        raise ValueError("not a PNG stream")
    width, height = struct.unpack(">II", blob[16:24])
    return width, height


def _rasterizer_argv(template: str, pdf_path: Path, dpi: int, outdir: Path) -> list[str]:
    tokens = shlex.split(template)
    if not tokens:
        raise RasterizerUnavailable("rasterizer command template is empty")
    try:
        return [
            token.format(python=sys.executable, pdf=str(pdf_path), dpi=dpi, outdir=str(outdir))
            for token in tokens
        ]
    except (KeyError, IndexError) as exc:
        raise RasterizerUnavailable(f"bad rasterizer template placeholder: {exc}")


def rasterize_document(
    pdf_path: str | Path,
    dpi: int = 300,
    rasterizer_cmd: str = "",
    max_pages: int = MAX_DOCUMENT_PAGES,
) -> list[RasterPage]:
    """Render every PDF page to a PNG via the configured external tool.

    The tool is invoked once per document with ``{pdf}``, ``{dpi}`` and
    ``{outdir}`` substituted ({python} expands to the current
    interpreter) and must write ``page_NNN.png`` files plus an optional
    ``timings.json`` mapping page refs to milliseconds.
    """
    pdf_path = Path(pdf_path)
    if not pdf_path.is_file():
        raise CorruptPdf(f"{pdf_path}: no such file")
    template = rasterizer_cmd or DEFAULT_RASTERIZER_CMD
    with tempfile.TemporaryDirectory(prefix="vts-raster-") as tmp:
        outdir = Path(tmp)
        argv = _rasterizer_argv(template, pdf_path, dpi, outdir)
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=600)
        except FileNotFoundError as exc:
            raise RasterizerUnavailable(f"rasterizer not found: {exc}")
        except subprocess.TimeoutExpired:
            raise RasterizerUnavailable(f"rasterizer timed out: {' '.join(argv)}")
        if proc.returncode != 0:
            detail = (proc.stderr or proc.stdout or "").strip()[-500:]
            raise CorruptPdf(f"{pdf_path.name}: rasterizer failed: {detail}")
        png_paths = sorted(outdir.glob("page_*.png"))
        if not png_paths:
            raise CorruptPdf(f"{pdf_path.name}: rasterizer produced no pages")
        if len(png_paths) > min(max_pages, MAX_DOCUMENT_PAGES):
            raise PageLimitExceeded(
                f"{pdf_path.name}: {len(png_paths)} pages exceeds limit "
                f"{min(max_pages, MAX_DOCUMENT_PAGES)}"
            )
        timings = _load_timings(outdir / "timings.json")
        pages = []
        for index, png_path in enumerate(png_paths, start=1):
            ref = page_ref(index)
            if png_path.name != f"page_{ref}.png":
                raise CorruptPdf(
                    f"{pdf_path.name}: rasterizer output {png_path.name} breaks the "
                    f"page_{ref}.png numbering contract"
                )
            blob = png_path.read_bytes()
            try:
                width, height = png_dimensions(blob)
            except ValueError as exc:
                raise CorruptPdf(f"{pdf_path.name} page {ref}: {exc}")
            pages.append(
                RasterPage(
                    page=ref,
                    png=blob,
                    dpi=dpi,
                    width_px=width,
                    height_px=height,
                    render_ms=int(timings.get(ref, 0)),
                )
            )
        return pages


def _load_timings(path: Path) -> dict[str, int]:
    if not path.is_file():
        return {}
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return {}
    if not isinstance(raw, dict):
        return {}
    out = {}
    for key, value in raw.items():
        try:
            out[page_ref(key)] = int(value)
        except (ValueError, TypeError):
            continue
    return out


# --- extraction ---------------------------------------------------------


def _parse_extraction(text: str, raster: RasterPage, source: str) -> PageRecord:
    import yaml

    what = f"page {raster.page} extraction"
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaViolation(what, f"not valid YAML: {exc}")
    if not isinstance(data, Mapping) or "elements" not in data:
        raise SchemaViolation(what, "expected a mapping with an `elements` list")
    raw_elements = data["elements"] or []
    if not isinstance(raw_elements, Sequence) or isinstance(raw_elements, str):
        raise SchemaViolation(what, "`elements` must be a list")

    staged: list[tuple[BBox, ElementKind, str]] = []
    for position, raw in enumerate(raw_elements):
        if not isinstance(raw, Mapping):
            raise SchemaViolation(what, f"element {position} is not a mapping")
        if "kind" not in raw:
            raise SchemaViolation(what, f"element {position} missing `kind`")
        try:
            kind = ElementKind(raw["kind"])
        except ValueError:
            raise SchemaViolation(what, f"element {position} has unknown kind {raw['kind']!r}")
        payload_key = {"text": "content", "table": "csv", "figure": "caption"}[kind.value]
        if payload_key not in raw:
            raise SchemaViolation(what, f"element {position} missing `{payload_key}`")
        bbox_raw = raw.get("bbox")
        if not isinstance(bbox_raw, Sequence) or isinstance(bbox_raw, str) or len(bbox_raw) != 4:
            raise SchemaViolation(what, f"element {position} has bad bbox {bbox_raw!r}")
        try:
            bbox = BBox(*[float(v) for v in bbox_raw])
        except (TypeError, ValueError) as exc:
            raise SchemaViolation(what, f"element {position} has bad bbox: {exc}")
        payload = str(raw[payload_key])
        if kind is ElementKind.TABLE:
            payload = payload.replace("\r\n", "\n").replace("\r", "\n")
        staged.append((bbox, kind, payload))

    staged.sort(key=lambda item: (item[0].y0, item[0].x0))
    elements = []
    for ordinal, (bbox, kind, payload) in enumerate(staged, start=1):
        payload_key = {"text": "content", "table": "csv", "figure": "caption"}[kind.value]
        elements.append(
            PageElement(
                id=f"p{raster.page}-e{ordinal:02d}",
                kind=kind,
                bbox=bbox,
                **{payload_key: payload},
            )
        )
    try:
        return PageRecord(page=raster.page, source=source, dpi=raster.dpi, elements=tuple(elements))
    except ValueError as exc:
        raise SchemaViolation(what, str(exc))


def extraction_request(raster: RasterPage, model: str, note: str = "") -> ModelRequest:
    return ModelRequest(
        model=model,
        system_prompt=EXTRACTION_SYSTEM,
        user_prompt=EXTRACTION_USER + note,
        images=(raster.png,),
        response_format=ResponseFormat.YAML,
        max_output_tokens=4096,
    )


def extract_page(raster: RasterPage, source: str, session: ProviderSession) -> PageRecord:
    """Extract one page's elements, retrying once on a malformed reply."""
    last_reason = ""
    for attempt in range(2):
        note = _RETRY_NOTE.format(reason=last_reason) if attempt else ""
        try:
            response = session.complete(extraction_request(raster, session.model, note))
            return _parse_extraction(response.text, raster, source)
        except (MalformedResponse, SchemaViolation) as exc:
            last_reason = str(exc)
    raise ExtractionFailed(raster.page, last_reason)


# --- persistence --------------------------------------------------------


def page_yaml_path(directory: Path, ref: str) -> Path:
    return directory / f"page_{ref}.yaml"


def page_png_path(directory: Path, ref: str) -> Path:
    return directory / f"page_{ref}.png"


def store_pages(
    records: Sequence[PageRecord],
    directory: str | Path,
    pngs: Mapping[str, bytes] | None = None,
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for record in records:
        page_yaml_path(directory, record.page).write_text(
            canonical.page_record_to_yaml(record), encoding="utf-8", newline="\n"
        )
        if pngs and record.page in pngs:
            page_png_path(directory, record.page).write_bytes(pngs[record.page])


def load_pages(directory: str | Path) -> list[PageRecord]:
    directory = Path(directory)
    if not directory.is_dir():
        return []
    records = []
    for path in sorted(directory.glob("page_*.yaml")):
        try:
            record = canonical.page_record_from_yaml(
                path.read_text(encoding="utf-8"), what=path.name
            )
        except OSError as exc:
            raise SchemaViolation(path.name, f"unreadable: {exc}")
        expected = path.stem.removeprefix("page_")
        if record.page != expected:
            raise SchemaViolation(path.name, f"file is named {expected} but holds page {record.page}")
        records.append(record)
    return records


# --- orchestration ------------------------------------------------------


@dataclass(frozen=True)
class IngestReport:
    source: str
    dpi: int
    pages: tuple[PageRecord, ...]
    render_ms: Mapping[str, int]

    def as_dict(self) -> dict[str, Any]:
        return {
            "source": self.source,
            "dpi": self.dpi,
            "page_count": len(self.pages),
            "render_ms": {ref: self.render_ms[ref] for ref in sorted(self.render_ms)},
        }


def ingest_document(
    pdf_path: str | Path,
    out_dir: str | Path,
    session: ProviderSession,
    dpi: int = 300,
    rasterizer_cmd: str = "",
    parallelism: int = 4,
    max_pages: int = MAX_DOCUMENT_PAGES,
) -> IngestReport:
    """Rasterize and extract a whole document into ``out_dir``.

    Pages may extract concurrently; records are assembled and stored in
    page order so the on-disk result is independent of scheduling.
    """
    pdf_path = Path(pdf_path)
    rasters = rasterize_document(pdf_path, dpi=dpi, rasterizer_cmd=rasterizer_cmd, max_pages=max_pages)
    source = pdf_path.name

    if parallelism > 1 and len(rasters) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            records = list(pool.map(lambda r: extract_page(r, source, session), rasters))
    else:
        records = [extract_page(raster, source, session) for raster in rasters]

    out_dir = Path(out_dir)
    store_pages(records, out_dir, pngs={raster.page: raster.png for raster in rasters})
    report = IngestReport(
        source=source,
        dpi=dpi,
        pages=tuple(records),
        render_ms={raster.page: raster.render_ms for raster in rasters},
    )
    (out_dir / "ingest_report.yaml").write_text(
        canonical.yaml_dump(report.as_dict()), encoding="utf-8", newline="\n"
    )
    return report
