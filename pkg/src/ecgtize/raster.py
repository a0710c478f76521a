"""Document loading: PDF/PNG/JPEG to an RGB pixel matrix, plus grayscale."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import pdfmini
from .errors import EmptyDocument, UnreadableDocument

DEFAULT_DPI = 300
DPI_MIN, DPI_MAX = 72, 1200

# ITU-R BT.601 luma weights, fixed for cross-platform determinism.
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class RasterPage:
    """RGB page raster with resolution metadata."""

    pixels: np.ndarray          # (height, width, 3) uint8
    dpi: float

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError("RasterPage expects an (h, w, 3) array")
        if self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise ValueError("empty page")
        if self.dpi < DPI_MIN:
            raise ValueError(f"dpi must be >= {DPI_MIN}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass
class GrayImage:
    """Luminance image, same dimensions as its source page."""

    values: np.ndarray          # (height, width) uint8

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def load_document(path: str | Path, dpi: float = DEFAULT_DPI,
                  page_index: int = 0) -> RasterPage:
    """Load the given page of a PDF, or a PNG/JPEG image, as an RGB raster.

    PDFs are rasterized at ``dpi``.  Raster images pass through unscaled;
    their DPI comes from file metadata when present, else from the argument.
    """
    if not DPI_MIN <= dpi <= DPI_MAX:
        raise ValueError(f"dpi {dpi} outside [{DPI_MIN}, {DPI_MAX}]")
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise UnreadableDocument(f"cannot read {path}: {exc}") from exc

    if data[:5] == b"%PDF-" or path.suffix.lower() == ".pdf":
        try:
            pixels = pdfmini.rasterize(data, dpi, page_index)
        except EmptyDocument:
            raise
        except UnreadableDocument as exc:
            raise UnreadableDocument(f"{path}: {exc}") from exc
        return RasterPage(pixels=pixels, dpi=dpi)

    try:
        with Image.open(path) as img:
            meta_dpi = img.info.get("dpi")
            rgb = img.convert("RGB")
            pixels = np.asarray(rgb)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise UnreadableDocument(f"cannot decode {path}: {exc}") from exc
    if page_index != 0:
        raise EmptyDocument(f"{path}: raster images have a single page")
    eff_dpi = dpi
    if meta_dpi and meta_dpi[0]:
        eff_dpi = float(meta_dpi[0])
    return RasterPage(pixels=pixels, dpi=eff_dpi)


def to_gray(page: RasterPage) -> GrayImage:
    """BT.601 luminance: round(0.299 R + 0.587 G + 0.114 B), clamped to 0..255."""
    lum = page.pixels.astype(np.float64) @ _LUMA
    values = np.clip(np.floor(lum + 0.5), 0, 255).astype(np.uint8)
    return GrayImage(values=values)
