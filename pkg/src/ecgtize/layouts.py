"""Page layouts: which lead is printed in which trace band and time window."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError

# Canonical lead order used everywhere a 12-vector is indexed (records, wire
# frames, file schemas).
LEAD_ORDER = ("I", "II", "III", "aVR", "aVL", "aVF",
              "V1", "V2", "V3", "V4", "V5", "V6")
LEAD_INDEX = {lead: i for i, lead in enumerate(LEAD_ORDER)}

SAMPLE_RATE = 500          # Hz
RECORD_SAMPLES = 5_000     # 10 s per lead
TRACE_POINTS = 5_140       # resampled trace: 140-point reference pulse + 5,000 signal points
PULSE_POINTS = 140


@dataclass(frozen=True)
class LayoutSpec:
    """Mapping from (band, window) slots on the page to lead names.

    ``lead_grid[(band, window)] -> lead_id`` covers each of the 12 leads
    exactly once; ``rhythm_leads`` are printed a second time, full length,
    one extra band per entry below the grid bands.
    """

    kind: str                                   # "3x4" or "2x6"
    window_points: int                          # 1,250 (2.5 s) or 2,500 (5 s)
    lead_grid: dict[tuple[int, int], str]
    rhythm_leads: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        leads = sorted(self.lead_grid.values())
        if leads != sorted(LEAD_ORDER):
            raise ConfigError(
                f"layout grid must cover all 12 leads exactly once, got {leads}")
        for lead in self.rhythm_leads:
            if lead not in LEAD_ORDER:
                raise ConfigError(f"unknown rhythm lead {lead!r}")
        if RECORD_SAMPLES % self.window_points:
            raise ConfigError(
                f"window_points {self.window_points} does not divide {RECORD_SAMPLES}")

    @property
    def grid_bands(self) -> int:
        return 1 + max(b for b, _ in self.lead_grid)

    @property
    def n_bands(self) -> int:
        return self.grid_bands + len(self.rhythm_leads)

    @property
    def windows_per_band(self) -> int:
        return RECORD_SAMPLES // self.window_points

    def band_leads(self, band: int) -> list[tuple[str, int]]:
        """Leads drawn in a band, as (lead_id, window_index) in time order."""
        if band >= self.grid_bands:
            rhythm = self.rhythm_leads[band - self.grid_bands]
            return [(rhythm, 0)]
        return [(self.lead_grid[(band, w)], w) for w in range(self.windows_per_band)]

    def window_slot(self, lead: str) -> tuple[int, int] | None:
        """(band, window) where a lead appears in the grid."""
        for slot, lid in self.lead_grid.items():
            if lid == lead:
                return slot
        return None


def _grid(rows: list[list[str]]) -> dict[tuple[int, int], str]:
    return {(b, w): lead for b, row in enumerate(rows) for w, lead in enumerate(row)}


def preset(name: str, rhythm: bool = False) -> LayoutSpec:
    """Named layout presets.

    ``3x4``            three bands of four 2.5 s windows, filled column-first
                       (band 0 = I, aVR, V1, V4).
    ``3x4-transposed`` same page shape, leads filled in sequence along each
                       band (band 0 = I, II, III, aVR).
    ``2x6``            six bands of two 5 s windows, limb leads left,
                       precordial leads right.
    """
    rhythm_leads = ("II",) if rhythm else ()
    if name == "3x4":
        rows = [["I", "aVR", "V1", "V4"],
                ["II", "aVL", "V2", "V5"],
                ["III", "aVF", "V3", "V6"]]
        return LayoutSpec("3x4", 1250, _grid(rows), rhythm_leads)
    if name == "3x4-transposed":
        rows = [["I", "II", "III", "aVR"],
                ["aVL", "aVF", "V1", "V2"],
                ["V3", "V4", "V5", "V6"]]
        return LayoutSpec("3x4", 1250, _grid(rows), rhythm_leads)
    if name == "2x6":
        rows = [["I", "V1"], ["II", "V2"], ["III", "V3"],
                ["aVR", "V4"], ["aVL", "V5"], ["aVF", "V6"]]
        return LayoutSpec("2x6", 2500, _grid(rows), rhythm_leads)
    raise ConfigError(f"unknown layout preset {name!r}")


def load_layout_file(path: str) -> LayoutSpec:
    """Read a custom layout from JSON.

    Schema: ``{"kind": "3x4", "window_points": 1250,
    "bands": [["I","aVR","V1","V4"], ...], "rhythm_leads": ["II"]}``.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read layout file {path}: {exc}") from exc
    unknown = set(doc) - {"kind", "window_points", "bands", "rhythm_leads"}
    if unknown:
        raise ConfigError(f"unknown layout keys: {sorted(unknown)}")
    try:
        return LayoutSpec(
            kind=doc["kind"],
            window_points=int(doc["window_points"]),
            lead_grid=_grid(doc["bands"]),
            rhythm_leads=tuple(doc.get("rhythm_leads", ())),
        )
    except KeyError as exc:
        raise ConfigError(f"layout file missing key {exc}") from exc
