"""Page-to-record orchestration: raster -> text scrub -> bands -> signals."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (BandCountMismatch, FlatPulse, NoBandsFound, OcrUnavailable)
from .extract import (EXTRACTORS, EcgRecord, LeadSignal, assemble_record,
                      calibrate, calibrate_fixed, default_px_per_mv,
                      fill_empty, resample_5140, split_leads, split_reference)
from .layouts import LayoutSpec, SAMPLE_RATE, load_layout_file, preset
from .raster import RasterPage, load_document, to_gray
from .textscrub import PageMetadata, detect_text, scrub
from .tracefind import BinaryImage, TraceBand, binarize, detect_bands, robust_ink_threshold

log = logging.getLogger("ecgtize.pipeline")

# Band expansion for the provisional text pass: tight, so labels between
# bands are scrubbed, while text hugging the trace is still left alone.
TEXT_BAND_EXPAND = 0.15


@dataclass
class DigitizeOptions:
    method: str = "fragmented"
    layout: str = "auto"            # preset name, "auto", or "file"
    layout_file: str | None = None
    dpi: float = 300.0
    page_index: int = 0
    ocr: str = "heuristic"          # heuristic | external | off
    ocr_cmd: str | None = None


@dataclass
class DigitizeReport:
    bands: list[TraceBand] = field(default_factory=list)
    layout: LayoutSpec | None = None
    seconds: float = 0.0
    warnings: list[str] = field(default_factory=list)


def _resolve_layout(bin_img: BinaryImage, opts: DigitizeOptions,
                    report: DigitizeReport) -> LayoutSpec:
    if opts.layout_file:
        return load_layout_file(opts.layout_file)
    found = len(detect_bands(bin_img))
    if opts.layout == "auto":
        by_count = {3: ("3x4", False), 4: ("3x4", True),
                    6: ("2x6", False), 7: ("2x6", True)}
        if found not in by_count:
            raise BandCountMismatch(
                f"cannot infer a layout from {found} trace bands")
        name, rhythm = by_count[found]
        return preset(name, rhythm=rhythm)
    if opts.layout in ("3x4", "3x4-transposed"):
        return preset(opts.layout, rhythm=found >= 4)
    if opts.layout == "2x6":
        return preset(opts.layout, rhythm=found >= 7)
    return preset(opts.layout)


def digitize_page(path, opts: DigitizeOptions = DigitizeOptions()
                  ) -> tuple[EcgRecord, DigitizeReport]:
    """Digitize one document page into a calibrated record."""
    t0 = time.perf_counter()
    report = DigitizeReport()
    page = load_document(path, dpi=opts.dpi, page_index=opts.page_index)

    metadata = PageMetadata()
    if opts.ocr != "off":
        page = _scrub_text(page, opts, report, metadata)

    gray = to_gray(page)
    bin_img = binarize(gray, robust_ink_threshold(gray))
    layout = _resolve_layout(bin_img, opts, report)
    report.layout = layout
    bands = detect_bands(bin_img, expected=layout.n_bands)
    report.bands = bands

    extractor = EXTRACTORS[opts.method]
    signals: list[LeadSignal] = []
    for index, band in enumerate(bands):
        sub = bin_img.bits[band.row_start:band.row_end,
                           band.col_start:band.col_end]
        trace = extractor(sub)
        if trace.empty_mask.any():
            trace = fill_empty(trace)
        resampled = resample_5140(trace)
        pulse, body = split_reference(resampled)
        for lead, window, w_index in split_leads(body, layout, index):
            try:
                mv = calibrate(window, pulse)
            except FlatPulse:
                px_per_mv = default_px_per_mv(page.dpi)
                report.warnings.append(
                    f"band {index}: flat reference pulse; assuming "
                    f"{px_per_mv:.1f} px/mV")
                log.warning(report.warnings[-1])
                mv = calibrate_fixed(window, pulse, px_per_mv)
            offset = w_index * layout.window_points / SAMPLE_RATE
            if index >= layout.grid_bands:
                offset = 0.0
            signals.append(LeadSignal(lead_id=lead, samples=mv,
                                      sample_rate=SAMPLE_RATE,
                                      window_offset=offset))
    record = assemble_record(signals, layout, metadata=metadata)
    report.seconds = time.perf_counter() - t0
    return record, report


def _scrub_text(page: RasterPage, opts: DigitizeOptions,
                report: DigitizeReport, metadata: PageMetadata) -> RasterPage:
    """Detect text on the raw page and erase what does not touch a trace."""
    gray = to_gray(page)
    bin_img = binarize(gray, robust_ink_threshold(gray))
    try:
        provisional = detect_bands(bin_img, expand_ratio=TEXT_BAND_EXPAND)
    except NoBandsFound:
        provisional = []

    boxes = []
    if opts.ocr == "external":
        try:
            boxes = detect_text(page, engine="external", ocr_cmd=opts.ocr_cmd)
        except OcrUnavailable as exc:
            report.warnings.append(f"external OCR unavailable ({exc}); "
                                   f"using heuristic detection")
            log.warning(report.warnings[-1])
            boxes = detect_text(page, engine="heuristic", bands=provisional)
    else:
        boxes = detect_text(page, engine="heuristic", bands=provisional)

    # Text sitting on a trace cannot be erased without harming the signal;
    # extraction is expected to cope with it instead.
    scrubbable = [b for b in boxes
                  if not any(b.intersects_band(band) for band in provisional)]
    scrubbed, meta = scrub(page, scrubbable)
    metadata.entries.extend(meta.entries)
    metadata.entries.extend(
        (b.text, b) for b in boxes if b not in scrubbable and b.text)
    return scrubbed
