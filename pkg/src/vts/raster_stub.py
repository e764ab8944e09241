"""Minimal deterministic PDF rasterizer for offline pipelines.

Fulfils the ingestion command-template contract (``{pdf}``, ``{dpi}``,
``{outdir}``) without any native rendering dependency: it reads the page
count and media box straight from the PDF structure and emits one
grayscale PNG per page whose bytes depend only on (page number, page
size, dpi). Each page gets a distinct marker band so downstream hashes
differ per page. Timings are measured and written to ``timings.json``.

Real deployments point ``ingest.rasterizer_cmd`` at a full renderer
(e.g. pdftoppm or mutool); this stub keeps tests and demos hermetic.
"""

from __future__ import annotations

import argparse
import json
import re
import struct
import sys
import time
import zlib
from pathlib import Path

_PAGE_RE = re.compile(rb"/Type\s*/Page\b")
_MEDIABOX_RE = re.compile(
    rb"/MediaBox\s*\[\s*([0-9.+-]+)\s+([0-9.+-]+)\s+([0-9.+-]+)\s+([0-9.+-]+)\s*\]"
)

_POINTS_PER_INCH = 72.0
_DEFAULT_BOX = (612.0, 792.0)  # US letter


def _chunk(kind: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + kind
        + payload
        + struct.pack(">I", zlib.crc32(kind + payload) & 0xFFFFFFFF)
    )


def encode_gray_png(width: int, height: int, pixel_at) -> bytes:
    """Encode an 8-bit grayscale PNG with stored (level-0) compression.

    Level 0 keeps the byte stream identical across zlib builds.
    """
    rows = bytearray()
    for y in range(height):
        rows.append(0)  # filter type: none
        rows.extend(pixel_at(x, y) for x in range(width))
    ihdr = struct.pack(">IIBBBBB", width, height, 8, 0, 0, 0, 0)
    return (
        b"\x89PNG\r\n\x1a\n"
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(bytes(rows), 0))
        + _chunk(b"IEND", b"")
    )


def page_count(data: bytes) -> int:
    return len(_PAGE_RE.findall(data))


def media_box(data: bytes) -> tuple[float, float]:
    match = _MEDIABOX_RE.search(data)
    if not match:
        return _DEFAULT_BOX
    x0, y0, x1, y1 = (float(match.group(i)) for i in range(1, 5))
    width, height = abs(x1 - x0), abs(y1 - y0)
    if width <= 0 or height <= 0:
        return _DEFAULT_BOX
    return width, height


def render_page(number: int, width: int, height: int) -> bytes:
    """A white page with a dark marker band placed by page number."""
    band_top = (16 * number) % max(1, height - 8)
    band_bottom = min(height, band_top + 8)

    def pixel_at(x: int, y: int) -> int:
        if band_top <= y < band_bottom:
            return 32
        if y < 2 or y >= height - 2 or x < 2 or x >= width - 2:
            return 200  # page border
        return 255

    return encode_gray_png(width, height, pixel_at)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("pdf", help="input PDF path")
    parser.add_argument("--dpi", type=int, default=300)
    parser.add_argument("--out", required=True, help="output directory for page PNGs")
    args = parser.parse_args(argv)

    pdf_path = Path(args.pdf)
    try:
        data = pdf_path.read_bytes()
    except OSError as exc:
        print(f"cannot read {pdf_path}: {exc}", file=sys.stderr)
        return 2
    if not data.startswith(b"%PDF-"):
        print(f"{pdf_path} is not a PDF", file=sys.stderr)
        return 2
    pages = page_count(data)
    if pages == 0:
        print(f"{pdf_path} contains no pages", file=sys.stderr)
        return 2
    if args.dpi <= 0:
        print("dpi must be positive", file=sys.stderr)
        return 2

    box_w, box_h = media_box(data)
    width = max(1, round(box_w / _POINTS_PER_INCH * args.dpi))
    height = max(1, round(box_h / _POINTS_PER_INCH * args.dpi))

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    timings: dict[str, int] = {}
    for number in range(1, pages + 1):
        started = time.perf_counter()
        png = render_page(number, width, height)
        ref = f"{number:03d}"
        (outdir / f"page_{ref}.png").write_bytes(png)
        timings[ref] = int((time.perf_counter() - started) * 1000)
    (outdir / "timings.json").write_text(json.dumps(timings, sort_keys=True), encoding="utf-8")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
