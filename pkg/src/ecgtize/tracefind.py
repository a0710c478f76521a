"""Binarization and trace-band location.

Bands are found from the per-row ink-fraction profile of the binarized page:
contiguous active row runs are merged across small gaps, optionally reduced
to the k strongest, then grown vertically (bounded) so tall excursions whose
rows are too sparse to pass the activity threshold still land inside their
band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BandCountMismatch, NoBandsFound
from .raster import GrayImage

# Fractions of page height / row width; see detect_bands.
DEFAULT_ACTIVITY_THRESHOLD = 0.005
DEFAULT_MERGE_GAP_FRAC = 0.01
DEFAULT_EXPAND_RATIO = 1.0
DEFAULT_MIN_STRENGTH_FRAC = 0.05

# A plausible page is mostly background; more ink than this means the
# threshold swallowed the grid and must be re-derived from the dark pixels.
MAX_PLAUSIBLE_INK_FRACTION = 0.05


@dataclass
class BinaryImage:
    """0 = ink/trace, 1 = background."""

    bits: np.ndarray            # (height, width) uint8 of {0, 1}

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def ink(self) -> np.ndarray:
        """Boolean mask of ink pixels."""
        return self.bits == 0


@dataclass
class VarianceProfile:
    axis: str                   # "rows" or "columns"
    values: np.ndarray


@dataclass(frozen=True)
class TraceBand:
    """Half-open pixel rectangle containing one drawn trace."""

    row_start: int
    row_end: int
    col_start: int
    col_end: int

    def __post_init__(self):
        if self.row_start >= self.row_end or self.col_start >= self.col_end:
            raise ValueError(f"degenerate band {self}")


def otsu_threshold(img: GrayImage) -> int:
    """Threshold maximizing between-class variance; smallest t on ties.

    The objective is evaluated in exact integer arithmetic so ties are real
    ties, not float artifacts:  w0*w1*(mu0-mu1)^2 is proportional to
    (s0*n1 - s1*n0)^2 / (n0*n1) with integer numerators.
    """
    hist = np.bincount(img.values.ravel(), minlength=256)
    counts = [int(c) for c in hist]
    sums = [i * int(c) for i, c in enumerate(hist)]
    total_n = sum(counts)
    total_s = sum(sums)

    best_t = 0
    best_num, best_den = 0, 1     # best objective as a fraction num/den
    n0 = s0 = 0
    for t in range(256):
        n0 += counts[t]
        s0 += sums[t]
        n1 = total_n - n0
        if n0 == 0 or n1 == 0:
            continue
        s1 = total_s - s0
        num = (s0 * n1 - s1 * n0) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_num, best_den, best_t = num, den, t
    return best_t


def binarize(img: GrayImage, t: int) -> BinaryImage:
    """0 (ink) where luminance <= t, else 1 (background)."""
    return BinaryImage(bits=(img.values > t).astype(np.uint8))


def robust_ink_threshold(img: GrayImage, max_refinements: int = 3) -> int:
    """Otsu threshold, re-derived from the dark class while the resulting
    ink fraction is implausibly large (light grids can dominate the first
    split on mostly-white pages)."""
    values = img.values.ravel()
    t = otsu_threshold(img)
    for _ in range(max_refinements):
        dark = values[values <= t]
        if dark.size == 0 or dark.size / values.size <= MAX_PLAUSIBLE_INK_FRACTION:
            break
        t2 = otsu_threshold(GrayImage(values=dark.reshape(1, -1)))
        if t2 >= t:
            break
        t = t2
    return t


def variance_profile(bin_img: BinaryImage, axis: str) -> VarianceProfile:
    """Per-row or per-column population variance of the 0/1 bits."""
    if axis not in ("rows", "columns"):
        raise ValueError(f"axis must be 'rows' or 'columns', got {axis!r}")
    np_axis = 1 if axis == "rows" else 0
    values = np.var(bin_img.bits.astype(np.float64), axis=np_axis)
    return VarianceProfile(axis=axis, values=values)


def row_ink_profile(bin_img: BinaryImage) -> np.ndarray:
    """Mean ink fraction per row.  Unlike the 0/1 variance p(1-p) this does
    not vanish on fully-inked rows, so band detection thresholds on it."""
    return np.mean(bin_img.ink(), axis=1)


def _active_regions(active: np.ndarray) -> list[tuple[int, int]]:
    idx = np.flatnonzero(active)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([idx[0]], idx[breaks + 1]))
    ends = np.concatenate((idx[breaks] + 1, [idx[-1] + 1]))
    return list(zip(starts.tolist(), ends.tolist()))


def detect_bands(bin_img: BinaryImage, expected: int | None = None,
                 activity_threshold: float = DEFAULT_ACTIVITY_THRESHOLD,
                 merge_gap_frac: float = DEFAULT_MERGE_GAP_FRAC,
                 expand_ratio: float = DEFAULT_EXPAND_RATIO,
                 min_strength_frac: float = DEFAULT_MIN_STRENGTH_FRAC) -> list[TraceBand]:
    """Locate horizontal trace bands, top to bottom.

    Regions whose integrated ink is a tiny fraction of the strongest one
    (pulse plateaus, stray labels) are not bands and are dropped.  When
    ``expected`` is given, the ``expected`` strongest regions keep their
    slots and a shortfall raises BandCountMismatch.
    """
    h = bin_img.height
    profile = row_ink_profile(bin_img)
    regions = _active_regions(profile > activity_threshold)
    if not regions:
        raise NoBandsFound("no rows with ink above the activity threshold")

    merge_gap = max(1, round(merge_gap_frac * h))
    merged = [regions[0]]
    for start, end in regions[1:]:
        if start - merged[-1][1] < merge_gap:
            merged[-1] = (merged[-1][0], end)
        else:
            merged.append((start, end))

    strength = [float(profile[s:e].sum()) for s, e in merged]
    floor = min_strength_frac * max(strength)
    merged = [r for r, st in zip(merged, strength) if st >= floor]
    strength = [st for st in strength if st >= floor]

    if expected is not None:
        if len(merged) < expected:
            raise BandCountMismatch(
                f"expected {expected} bands, found {len(merged)}")
        keep = sorted(sorted(range(len(merged)), key=lambda i: -strength[i])[:expected])
        merged = [merged[i] for i in keep]

    # Grow each band toward its neighbours (half the gap, capped at
    # expand_ratio x its own core height) to capture sparse tall deflections.
    ink = bin_img.ink()
    bands = []
    for i, (start, end) in enumerate(merged):
        cap = max(1, round(expand_ratio * (end - start)))
        up_limit = 0 if i == 0 else (merged[i - 1][1] + start) // 2
        down_limit = h if i == len(merged) - 1 else (end + merged[i + 1][0]) // 2
        row_start = max(up_limit, start - cap, 0)
        row_end = min(down_limit, end + cap, h)
        cols = np.flatnonzero(ink[row_start:row_end].any(axis=0))
        if cols.size == 0:
            continue
        bands.append(TraceBand(row_start=row_start, row_end=row_end,
                               col_start=int(cols[0]), col_end=int(cols[-1]) + 1))
    if not bands:
        raise NoBandsFound("active rows contained no ink columns")
    if expected is not None and len(bands) < expected:
        raise BandCountMismatch(f"expected {expected} bands, found {len(bands)}")
    return bands
