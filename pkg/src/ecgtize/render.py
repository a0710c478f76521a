"""Paper-style page rendering of numeric records (round-trip test harness).

Pages are drawn at standard print conventions (10 mm/mV gain, 25 mm/s paper
speed by default): per band a 1 mV reference pulse occupying the leading
140/5,140 of the trace width, followed by the band's lead windows.  The
grid is drawn in light red so binarization can separate it from the
near-black trace.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from . import pdfmini
from .errors import ConfigError, IncompleteRecord
from .extract import EcgRecord
from .layouts import (LEAD_INDEX, LayoutSpec, PULSE_POINTS, RECORD_SAMPLES,
                      SAMPLE_RATE, TRACE_POINTS)
from .raster import RasterPage

# Pulse shape inside its 140 points: lead-in, 1 mV plateau, lead-out.
_PULSE_BASE_IN = 25
_PULSE_BASE_OUT = 25

# Page geometry in millimetres.
_BAND_PITCH_MM = 40.0
_BASELINE_DROP_MM = 28.0       # baseline below the top of its band slot
_MARGIN_X_MM = 5.0
_MARGIN_TOP_MM = 10.0
_MARGIN_BOTTOM_MM = 5.0
_LABEL_RISE_MM = 26.0          # label baseline above the trace baseline


@dataclass(frozen=True)
class RenderStyle:
    dpi: float = 300.0
    grid: bool = True
    grid_thin_rgb: tuple[int, int, int] = (255, 182, 182)
    grid_thick_rgb: tuple[int, int, int] = (255, 120, 120)
    grid_thin_px: int = 1
    grid_thick_px: int = 2
    trace_thickness: int = 2
    label_text: bool = True
    gain_mm_per_mv: float = 10.0
    paper_speed_mm_s: float = 25.0
    noise_sigma: float = 0.0       # gaussian pixel noise, gray levels
    speckle_frac: float = 0.0      # fraction of pixels flipped dark
    seed: int = 0

    def __post_init__(self):
        if self.gain_mm_per_mv <= 0 or self.paper_speed_mm_s <= 0:
            raise ConfigError("gain and paper speed must be positive")
        if self.trace_thickness < 1:
            raise ConfigError("trace thickness must be >= 1 px")


def load_style_file(path: str) -> RenderStyle:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read style file {path}: {exc}") from exc
    known = set(RenderStyle.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown style keys: {sorted(unknown)}")
    for key in ("grid_thin_rgb", "grid_thick_rgb"):
        if key in doc:
            doc[key] = tuple(doc[key])
    return replace(RenderStyle(), **doc)


def _pulse_mv() -> np.ndarray:
    pulse = np.zeros(PULSE_POINTS)
    pulse[_PULSE_BASE_IN:PULSE_POINTS - _PULSE_BASE_OUT] = 1.0
    return pulse


def render_page(record: EcgRecord, layout: LayoutSpec,
                style: RenderStyle = RenderStyle()) -> RasterPage:
    """Draw a record as a paper-style page raster."""
    px_mm = style.dpi / 25.4
    signal_w = round(RECORD_SAMPLES / SAMPLE_RATE * style.paper_speed_mm_s * px_mm)
    trace_w = round(signal_w * TRACE_POINTS / RECORD_SAMPLES)
    margin_x = round(_MARGIN_X_MM * px_mm)
    width = trace_w + 2 * margin_x
    n_bands = layout.n_bands
    height = round((_MARGIN_TOP_MM + _BAND_PITCH_MM * n_bands + _MARGIN_BOTTOM_MM) * px_mm)

    img = Image.new("RGB", (width, height), (255, 255, 255))
    draw = ImageDraw.Draw(img)
    if style.grid:
        _draw_grid(draw, width, height, px_mm, style)

    pulse = _pulse_mv()
    font = ImageFont.load_default() if style.label_text else None
    xs = margin_x + np.round(np.arange(TRACE_POINTS) * (trace_w - 1) / (TRACE_POINTS - 1)).astype(int)

    def polyline(baseline, lo, hi, mv):
        ys = baseline - np.round(mv * style.gain_mm_per_mv * px_mm).astype(int)
        points = list(zip(xs[lo:hi].tolist(), ys.tolist()))
        draw.line(points, fill=(0, 0, 0), width=style.trace_thickness)

    for band in range(n_bands):
        baseline = round((_MARGIN_TOP_MM + _BAND_PITCH_MM * band + _BASELINE_DROP_MM) * px_mm)
        # the pen lifts between the pulse and each lead window
        polyline(baseline, 0, PULSE_POINTS, pulse)
        for lead, window in layout.band_leads(band):
            idx = LEAD_INDEX[lead]
            if band >= layout.grid_bands:
                lo, hi = 0, RECORD_SAMPLES
            else:
                wp = layout.window_points
                lo, hi = window * wp, (window + 1) * wp
            seg = record.leads[idx, lo:hi]
            if not np.all(np.isfinite(seg)):
                raise IncompleteRecord(f"lead {lead}: non-finite samples in window")
            if not record.observed[idx, lo:hi].any():
                raise IncompleteRecord(f"lead {lead}: window [{lo}, {hi}) has no data")
            polyline(baseline, PULSE_POINTS + lo, PULSE_POINTS + hi, seg)
            if font is not None:
                x_text = int(xs[PULSE_POINTS + lo]) + 4
                y_text = baseline - round(_LABEL_RISE_MM * px_mm)
                draw.text((x_text, y_text), lead, font=font, fill=(0, 0, 0))

    pixels = np.asarray(img)
    if style.noise_sigma > 0 or style.speckle_frac > 0:
        pixels = _add_noise(pixels, style)
    return RasterPage(pixels=pixels, dpi=style.dpi)


def _draw_grid(draw: ImageDraw.ImageDraw, width: int, height: int,
               px_mm: float, style: RenderStyle) -> None:
    def lines(step_mm, color, weight):
        x = 0.0
        while x < width:
            xi = round(x)
            draw.rectangle([xi, 0, xi + weight - 1, height - 1], fill=color)
            x += step_mm * px_mm
        y = 0.0
        while y < height:
            yi = round(y)
            draw.rectangle([0, yi, width - 1, yi + weight - 1], fill=color)
            y += step_mm * px_mm

    lines(1.0, style.grid_thin_rgb, style.grid_thin_px)
    lines(5.0, style.grid_thick_rgb, style.grid_thick_px)


def _add_noise(pixels: np.ndarray, style: RenderStyle) -> np.ndarray:
    rng = np.random.default_rng(style.seed)
    out = pixels.astype(np.float64)
    if style.noise_sigma > 0:
        out += rng.normal(0.0, style.noise_sigma, size=out.shape)
    out = np.clip(np.round(out), 0, 255).astype(np.uint8)
    if style.speckle_frac > 0:
        h, w = out.shape[:2]
        k = int(style.speckle_frac * h * w)
        ys = rng.integers(0, h, size=k)
        xs = rng.integers(0, w, size=k)
        out[ys, xs] = rng.integers(0, 64, size=(k, 1))
    return out


def save_page(page: RasterPage, path: str | Path) -> None:
    """Write a rendered page as PNG or single-page PDF (by extension)."""
    path = Path(path)
    if path.suffix.lower() == ".pdf":
        pdfmini.write_image_pdf(str(path), page.pixels, page.dpi)
    elif path.suffix.lower() in (".png", ".jpg", ".jpeg"):
        Image.fromarray(page.pixels).save(
            path, dpi=(round(page.dpi), round(page.dpi)))
    else:
        raise ConfigError(f"unsupported output format {path.suffix!r}")
