"""Printed-text detection and removal.

Text found on the page is erased by in-painting each box with the mean of
the one-pixel ring around it, and the recognized strings are kept as page
metadata.  Boxes that intersect a trace band are reported but must not be
scrubbed: ink superimposed on the signal cannot be removed without damaging
it, and the fragmented extractor is built to ignore it instead.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import OcrUnavailable
from .raster import RasterPage, to_gray
from .tracefind import TraceBand, binarize, robust_ink_threshold

DEFAULT_GLYPH_HEIGHT_FRAC = 0.012   # ceiling for heuristic glyph height, as page fraction
_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class TextBox:
    """Half-open pixel box [x0, x1) x [y0, y1) with recognized text."""

    x0: int
    y0: int
    x1: int
    y1: int
    text: str = ""
    confidence: float = 0.0

    def __post_init__(self):
        if self.x0 >= self.x1 or self.y0 >= self.y1:
            raise ValueError(f"degenerate text box {self}")

    def intersects_band(self, band: TraceBand) -> bool:
        return (self.x0 < band.col_end and self.x1 > band.col_start
                and self.y0 < band.row_end and self.y1 > band.row_start)


@dataclass
class PageMetadata:
    """Recognized page text, kept out of signal outputs when anonymizing."""

    entries: list[tuple[str, TextBox]] = field(default_factory=list)

    def strings(self) -> list[str]:
        return [text for text, _ in self.entries if text]


def detect_text(page: RasterPage, engine: str = "heuristic",
                bands: list[TraceBand] | None = None,
                ocr_cmd: str | None = None,
                glyph_height_frac: float = DEFAULT_GLYPH_HEIGHT_FRAC) -> list[TextBox]:
    """Find text boxes on the RGB page.

    ``heuristic`` marks connected dark components shorter than the glyph
    ceiling that do not touch any trace band (no strings recovered).
    ``external`` runs the configured OCR executable on a temporary PNG and
    parses one ``x0 y0 x1 y1 confidence text...`` line per detection.
    """
    if engine == "heuristic":
        return _detect_heuristic(page, bands or [], glyph_height_frac)
    if engine == "external":
        return _detect_external(page, ocr_cmd)
    raise ValueError(f"unknown OCR engine {engine!r}")


def _detect_heuristic(page: RasterPage, bands: list[TraceBand],
                      glyph_height_frac: float) -> list[TextBox]:
    gray = to_gray(page)
    ink = binarize(gray, robust_ink_threshold(gray)).ink()
    if not ink.any():
        return []
    max_height = max(1, round(glyph_height_frac * page.height))
    labels, count = ndimage.label(ink, structure=_EIGHT_CONNECTED)
    boxes = []
    for sl in ndimage.find_objects(labels):
        if sl is None:
            continue
        rows, cols = sl
        box = TextBox(x0=cols.start, y0=rows.start, x1=cols.stop, y1=rows.stop,
                      confidence=0.5)
        if rows.stop - rows.start > max_height:
            continue
        if any(box.intersects_band(b) for b in bands):
            continue
        boxes.append(box)
    return boxes


def _detect_external(page: RasterPage, ocr_cmd: str | None) -> list[TextBox]:
    if not ocr_cmd:
        raise OcrUnavailable("no OCR command configured (--ocr-cmd / ECGTIZE_OCR_CMD)")
    with tempfile.TemporaryDirectory(prefix="ecgtize-ocr-") as tmp:
        png = Path(tmp) / "page.png"
        Image.fromarray(page.pixels).save(png)
        argv = shlex.split(ocr_cmd) + [str(png)]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=120)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise OcrUnavailable(f"OCR command failed to run: {exc}") from exc
    if proc.returncode != 0:
        raise OcrUnavailable(
            f"OCR command exited {proc.returncode}: {proc.stderr.strip()[:200]}")
    boxes = []
    for lineno, line in enumerate(proc.stdout.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(None, 5)
        if len(parts) < 5:
            raise OcrUnavailable(f"bad OCR output line {lineno}: {line!r}")
        try:
            x0, y0, x1, y1 = (int(round(float(v))) for v in parts[:4])
            conf = float(parts[4])
        except ValueError as exc:
            raise OcrUnavailable(f"bad OCR output line {lineno}: {line!r}") from exc
        text = parts[5] if len(parts) > 5 else ""
        x0, x1 = max(0, x0), min(page.width, x1)
        y0, y1 = max(0, y0), min(page.height, y1)
        if x0 < x1 and y0 < y1:
            boxes.append(TextBox(x0=x0, y0=y0, x1=x1, y1=y1, text=text,
                                 confidence=conf))
    return boxes


def scrub(page: RasterPage, boxes: list[TextBox]) -> tuple[RasterPage, PageMetadata]:
    """Replace each box interior with the mean of its one-pixel border ring.

    Pixels outside the boxes are returned bit-identical; all recognized
    strings go into the metadata whether or not their box was in bounds.
    """
    pixels = page.pixels.copy()
    h, w = pixels.shape[:2]
    for box in boxes:
        x0, y0 = max(0, box.x0), max(0, box.y0)
        x1, y1 = min(w, box.x1), min(h, box.y1)
        if x0 >= x1 or y0 >= y1:
            continue
        ring = _ring_pixels(page.pixels, x0, y0, x1, y1)
        if ring.size == 0:
            continue
        mean = np.floor(ring.mean(axis=0) + 0.5).astype(np.uint8)
        pixels[y0:y1, x0:x1] = mean
    metadata = PageMetadata(entries=[(box.text, box) for box in boxes])
    return RasterPage(pixels=pixels, dpi=page.dpi), metadata


def _ring_pixels(pixels: np.ndarray, x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
    h, w = pixels.shape[:2]
    parts = []
    if y0 - 1 >= 0:
        parts.append(pixels[y0 - 1, max(0, x0 - 1):min(w, x1 + 1)])
    if y1 < h:
        parts.append(pixels[y1, max(0, x0 - 1):min(w, x1 + 1)])
    if x0 - 1 >= 0:
        parts.append(pixels[y0:y1, x0 - 1])
    if x1 < w:
        parts.append(pixels[y0:y1, x1])
    if not parts:
        return np.empty((0, 3), dtype=np.float64)
    return np.concatenate(parts).reshape(-1, 3).astype(np.float64)
