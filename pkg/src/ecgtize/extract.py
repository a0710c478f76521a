"""Trace-band pixels to calibrated millivolt lead signals.

A band sub-matrix is reduced to one vertical coordinate per column (three
algorithms with different robustness/speed trade-offs), resampled to 5,140
points, split into the 140-point reference pulse plus 5,000 signal points,
sliced into lead windows, and scaled so the pulse spans 0..1 mV.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (AllColumnsEmpty, FlatPulse, LengthMismatch, MissingLead)
from .layouts import (LEAD_INDEX, LEAD_ORDER, LayoutSpec, PULSE_POINTS,
                      RECORD_SAMPLES, SAMPLE_RATE, TRACE_POINTS)
from .textscrub import PageMetadata

METHODS = ("full", "fragmented", "lazy")


@dataclass
class ColumnTrace:
    """Per-column vertical pixel coordinate, with explicit empty columns."""

    values: np.ndarray          # float, length m; arbitrary where empty
    empty_mask: np.ndarray      # bool, length m

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class CalibrationPulse:
    samples: np.ndarray         # 140 coordinate values

    def __post_init__(self):
        if len(self.samples) != PULSE_POINTS:
            raise LengthMismatch(
                f"pulse must have {PULSE_POINTS} samples, got {len(self.samples)}")


@dataclass
class LeadSignal:
    lead_id: str
    samples: np.ndarray         # millivolts
    sample_rate: float = SAMPLE_RATE
    window_offset: float = 0.0  # seconds from record start

    def __post_init__(self):
        if self.lead_id not in LEAD_INDEX:
            raise ValueError(f"unknown lead {self.lead_id!r}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError(f"lead {self.lead_id}: non-finite samples")


@dataclass
class EcgRecord:
    """12 x 5,000 record at 500 Hz with an observed/reconstructed mask."""

    leads: np.ndarray                       # (12, 5000) float64, millivolts
    observed: np.ndarray                    # (12, 5000) bool
    metadata: PageMetadata | None = None

    def __post_init__(self):
        self.leads = np.asarray(self.leads, dtype=np.float64)
        self.observed = np.asarray(self.observed, dtype=bool)
        if self.leads.shape != (len(LEAD_ORDER), RECORD_SAMPLES):
            raise ValueError(f"leads must be 12x{RECORD_SAMPLES}, got {self.leads.shape}")
        if self.observed.shape != self.leads.shape:
            raise ValueError("observed mask shape mismatch")

    @classmethod
    def empty(cls) -> "EcgRecord":
        return cls(leads=np.zeros((len(LEAD_ORDER), RECORD_SAMPLES)),
                   observed=np.zeros((len(LEAD_ORDER), RECORD_SAMPLES), dtype=bool))

    def lead(self, lead_id: str) -> np.ndarray:
        return self.leads[LEAD_INDEX[lead_id]]

    def copy(self) -> "EcgRecord":
        return EcgRecord(leads=self.leads.copy(), observed=self.observed.copy(),
                         metadata=self.metadata)


# ---------------------------------------------------------------------------
# Column extraction


def _ink(band: np.ndarray) -> np.ndarray:
    band = np.asarray(band)
    if band.ndim != 2 or band.size == 0:
        raise ValueError("band must be a non-empty 2-D matrix")
    return band == 0


def extract_full(band: np.ndarray) -> ColumnTrace:
    """Mean lit-pixel row per column."""
    ink = _ink(band)
    counts = ink.sum(axis=0)
    empty = counts == 0
    if empty.all():
        raise AllColumnsEmpty("no lit pixels in any column")
    rows = np.arange(ink.shape[0], dtype=np.float64)
    sums = rows @ ink
    values = np.divide(sums, counts, out=np.zeros_like(sums), where=~empty)
    return ColumnTrace(values=values, empty_mask=empty)


def extract_fragmented(band: np.ndarray) -> ColumnTrace:
    """Mean of the bottom-most contiguous lit run per column.

    Marks above the trace (lead labels, stray print) are separated from it
    by at least one background row and therefore never enter the run.
    """
    ink = _ink(band)
    n, m = ink.shape
    counts = ink.sum(axis=0)
    empty = counts == 0
    if empty.all():
        raise AllColumnsEmpty("no lit pixels in any column")
    # Length of the consecutive lit run ending at each row, per column.
    run = np.zeros(m, dtype=np.int64)
    run_at_last = np.zeros(m, dtype=np.int64)
    last = np.zeros(m, dtype=np.int64)
    for i in range(n):
        run = np.where(ink[i], run + 1, 0)
        hit = ink[i]
        last[hit] = i
        run_at_last[hit] = run[hit]
    values = last - (run_at_last - 1) / 2.0   # mean of a consecutive integer run
    values[empty] = 0.0
    return ColumnTrace(values=values, empty_mask=empty)


def extract_lazy(band: np.ndarray) -> ColumnTrace:
    """Anchor-following extraction.

    The anchor starts at the mean lit row of column 0 (n/2 if empty) and is
    kept while its row stays lit; otherwise it jumps to the nearest lit
    pixel, preferring the +i direction on distance ties.  The anchor always
    has a value, so no column is flagged empty.
    """
    ink = _ink(band)
    n, m = ink.shape
    values = np.empty(m, dtype=np.float64)

    col0 = np.flatnonzero(ink[:, 0])
    anchor = n / 2.0 if col0.size == 0 else float(col0.mean())
    values[0] = anchor

    lit_rows = [np.flatnonzero(ink[:, j]) for j in range(m)]
    for j in range(1, m):
        r0 = min(max(int(np.floor(anchor + 0.5)), 0), n - 1)
        if ink[r0, j]:
            values[j] = anchor
            continue
        rows = lit_rows[j]
        if rows.size:
            d = rows - r0
            # Distance-ordered outward scan, +i before -i at equal distance.
            key = 2 * np.abs(d) - (d > 0)
            anchor = float(rows[int(np.argmin(key))])
        values[j] = anchor
    return ColumnTrace(values=values, empty_mask=np.zeros(m, dtype=bool))


EXTRACTORS = {
    "full": extract_full,
    "fragmented": extract_fragmented,
    "lazy": extract_lazy,
}


def fill_empty(trace: ColumnTrace) -> ColumnTrace:
    """Linear interpolation across empty columns; edge runs take the nearest
    non-empty value."""
    if trace.empty_mask.all():
        raise AllColumnsEmpty("cannot fill a fully-empty trace")
    if not trace.empty_mask.any():
        return ColumnTrace(values=trace.values.copy(),
                           empty_mask=np.zeros(len(trace), dtype=bool))
    idx = np.arange(len(trace), dtype=np.float64)
    known = ~trace.empty_mask
    values = np.interp(idx, idx[known], trace.values[known])
    return ColumnTrace(values=values, empty_mask=np.zeros(len(trace), dtype=bool))


# ---------------------------------------------------------------------------
# Slicing and calibration


def resample_5140(trace: ColumnTrace) -> np.ndarray:
    """Linear resampling onto 5,140 evenly spaced positions over [0, m-1]."""
    if trace.empty_mask.any():
        raise ValueError("trace has empty columns; run fill_empty first")
    m = len(trace)
    if m == TRACE_POINTS:
        return trace.values.astype(np.float64).copy()
    positions = np.linspace(0.0, float(m - 1), TRACE_POINTS)
    return np.interp(positions, np.arange(m, dtype=np.float64), trace.values)


def split_reference(v: np.ndarray) -> tuple[CalibrationPulse, np.ndarray]:
    """First 140 points are the reference pulse, the remaining 5,000 the body."""
    if len(v) != TRACE_POINTS:
        raise LengthMismatch(f"expected {TRACE_POINTS} points, got {len(v)}")
    return CalibrationPulse(samples=np.asarray(v[:PULSE_POINTS], dtype=np.float64)), \
        np.asarray(v[PULSE_POINTS:], dtype=np.float64)


def split_leads(body: np.ndarray, layout: LayoutSpec,
                band_index: int) -> list[tuple[str, np.ndarray, int]]:
    """Slice a band body into (lead_id, window, window_index) tuples.

    Grid bands yield layout.windows_per_band equal windows; a rhythm band
    yields its lead over all 5,000 points.
    """
    if len(body) != RECORD_SAMPLES:
        raise LengthMismatch(f"body must have {RECORD_SAMPLES} points, got {len(body)}")
    if band_index >= layout.grid_bands:
        lead = layout.rhythm_leads[band_index - layout.grid_bands]
        return [(lead, np.asarray(body, dtype=np.float64), 0)]
    wp = layout.window_points
    return [(lead, np.asarray(body[w * wp:(w + 1) * wp], dtype=np.float64), w)
            for lead, w in layout.band_leads(band_index)]


def _pulse_baseline(flipped: np.ndarray) -> float:
    """Mode of the first and last 10 pulse samples (guards against samples on
    the rise edge leaking into the min).  Grouping quantizes to 1e-6 but the
    returned level is an exact member sample, keeping calibration invariant
    under vertical translation."""
    edges = np.concatenate((flipped[:10], flipped[-10:]))
    rounded = np.round(edges, 6)
    uniq, inverse, counts = np.unique(rounded, return_inverse=True,
                                      return_counts=True)
    modal = int(np.argmax(counts))          # ties pick the smallest (sorted)
    return float(edges[inverse == modal].min())


def calibrate(window: np.ndarray, pulse: CalibrationPulse) -> np.ndarray:
    """Scale a coordinate window to millivolts against the reference pulse.

    Image rows grow downward while voltage grows upward, so coordinates are
    negated first; the pulse baseline then maps to 0 mV and its plateau
    (maximum) to 1 mV.
    """
    flipped_pulse = -np.asarray(pulse.samples, dtype=np.float64)
    baseline = _pulse_baseline(flipped_pulse)
    plateau = float(flipped_pulse.max())
    span = plateau - baseline
    if span <= 1e-12:
        raise FlatPulse("reference pulse has no vertical extent")
    return (-np.asarray(window, dtype=np.float64) - baseline) / span


def calibrate_fixed(window: np.ndarray, pulse: CalibrationPulse,
                    px_per_mv: float) -> np.ndarray:
    """Fallback scaling by a fixed pixels-per-millivolt constant, with the
    (flat) pulse mean as the 0 mV baseline."""
    baseline = float(np.mean(-np.asarray(pulse.samples, dtype=np.float64)))
    return (-np.asarray(window, dtype=np.float64) - baseline) / px_per_mv


def assemble_record(leads: list[LeadSignal], layout: LayoutSpec,
                    metadata: PageMetadata | None = None) -> EcgRecord:
    """Place lead windows into a 12 x 5,000 buffer at their time offsets.

    All supported windows are already at 500 Hz, so placement is a copy.
    Full-length (rhythm) signals are applied last and override the window
    copy of the same lead.
    """
    record = EcgRecord.empty()
    record.metadata = metadata
    seen: set[str] = set()
    for signal in sorted(leads, key=lambda s: len(s.samples)):
        i = LEAD_INDEX[signal.lead_id]
        start = int(round(signal.window_offset * signal.sample_rate))
        stop = start + len(signal.samples)
        if stop > RECORD_SAMPLES or start < 0:
            raise ValueError(f"lead {signal.lead_id}: window [{start}, {stop}) "
                             f"outside record")
        record.leads[i, start:stop] = signal.samples
        record.observed[i, start:stop] = True
        seen.add(signal.lead_id)
    missing = [lead for lead in LEAD_ORDER if lead not in seen]
    if missing:
        raise MissingLead(f"no window for leads: {', '.join(missing)}")
    return record


def default_px_per_mv(dpi: float, gain_mm_per_mv: float = 10.0) -> float:
    """Standard-gain fallback when no usable pulse exists (~118.1 at 300 DPI)."""
    return dpi / 25.4 * gain_mm_per_mv
