"""Synthetic 12-lead records with known ground truth.

Beats are sums of raised-cosine components, so every wave has compact
support and exact onset/end times; records built here drive the round-trip,
fiducial and completion test fixtures as well as training-set generation
for completion backends.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .extract import EcgRecord
from .layouts import LEAD_INDEX, LEAD_ORDER, LayoutSpec, RECORD_SAMPLES, SAMPLE_RATE

# Beat components: (amplitude mV, center s relative to R, half-width s).
BEAT_COMPONENTS = {
    "p": (0.15, -0.160, 0.050),
    "q": (-0.10, -0.025, 0.012),
    "r": (1.00, 0.000, 0.012),
    "s": (-0.25, 0.025, 0.012),
    "t": (0.35, 0.250, 0.055),
}

# Exact support edges of the waves involved in the measured durations.
Q_ONSET_S = BEAT_COMPONENTS["q"][1] - BEAT_COMPONENTS["q"][2]
S_END_S = BEAT_COMPONENTS["s"][1] + BEAT_COMPONENTS["s"][2]
T_END_S = BEAT_COMPONENTS["t"][1] + BEAT_COMPONENTS["t"][2]
QT_S = T_END_S - Q_ONSET_S
QRS_S = S_END_S - Q_ONSET_S


@dataclass
class SynthTruth:
    r_positions: list[int]
    lead_gains: dict[str, float]
    rr_seconds: float

    def wave_offsets(self) -> dict[str, float]:
        """Component centers in seconds relative to R."""
        return {w: c for w, (_, c, _) in BEAT_COMPONENTS.items()}

    def amplitude(self, lead: str, wave: str) -> float:
        return BEAT_COMPONENTS[wave][0] * self.lead_gains[lead]


def beat_template(t: np.ndarray) -> np.ndarray:
    """One beat sampled at times `t` (seconds relative to the R center)."""
    out = np.zeros_like(t, dtype=np.float64)
    for amp, center, half in BEAT_COMPONENTS.values():
        inside = np.abs(t - center) <= half
        out[inside] += amp * 0.5 * (1.0 + np.cos(np.pi * (t[inside] - center) / half))
    return out


def _beat_train(r_positions: list[int], fs: float, n: int) -> np.ndarray:
    t = np.arange(n, dtype=np.float64) / fs
    wave = np.zeros(n)
    for r in r_positions:
        wave += beat_template(t - r / fs)
    return wave


def _sines(rng: np.random.Generator, n: int, fs: float, total_amp: float) -> np.ndarray:
    if total_amp <= 0:
        return np.zeros(n)
    k = int(rng.integers(1, 4))
    freqs = rng.uniform(1.0, 3.0, size=k)
    phases = rng.uniform(0.0, 2 * np.pi, size=k)
    amps = rng.uniform(0.3, 1.0, size=k)
    amps *= total_amp / amps.sum()
    t = np.arange(n, dtype=np.float64) / fs
    out = np.zeros(n)
    for a, f, ph in zip(amps, freqs, phases):
        out += a * np.sin(2 * np.pi * f * t + ph)
    return out


def make_record(seed: int, sine_amp: float = 0.25,
                with_beats: bool = True) -> tuple[EcgRecord, SynthTruth]:
    """Fully observed synthetic record.

    Limb leads satisfy the Einthoven/Goldberger identities exactly: only I
    and II are generated, the other four are derived from them.
    """
    rng = np.random.default_rng(seed)
    fs, n = SAMPLE_RATE, RECORD_SAMPLES
    rr = float(rng.uniform(0.78, 0.95))
    first = float(rng.uniform(0.35, 0.45))
    r_positions = []
    t = first
    while t < n / fs - 0.60:
        r_positions.append(int(round(t * fs)))
        t += rr

    gains = {"I": float(rng.uniform(0.6, 1.0)), "II": float(rng.uniform(0.9, 1.3))}
    for lead in LEAD_ORDER[6:]:
        gains[lead] = float(rng.uniform(0.5, 1.2))
    # Derived limb-lead gains (linear in I and II, like the signals).
    gains["III"] = gains["II"] - gains["I"]
    gains["aVR"] = -(gains["I"] + gains["II"]) / 2.0
    gains["aVL"] = gains["I"] - gains["II"] / 2.0
    gains["aVF"] = gains["II"] - gains["I"] / 2.0

    train = _beat_train(r_positions, fs, n) if with_beats else np.zeros(n)
    leads = np.zeros((len(LEAD_ORDER), n))
    base = {}
    for lead in ("I", "II"):
        base[lead] = gains[lead] * train + _sines(rng, n, fs, sine_amp)
    leads[LEAD_INDEX["I"]] = base["I"]
    leads[LEAD_INDEX["II"]] = base["II"]
    leads[LEAD_INDEX["III"]] = base["II"] - base["I"]
    leads[LEAD_INDEX["aVR"]] = -(base["I"] + base["II"]) / 2.0
    leads[LEAD_INDEX["aVL"]] = base["I"] - base["II"] / 2.0
    leads[LEAD_INDEX["aVF"]] = base["II"] - base["I"] / 2.0
    for lead in LEAD_ORDER[6:]:
        leads[LEAD_INDEX[lead]] = gains[lead] * train + _sines(rng, n, fs, sine_amp)

    record = EcgRecord(leads=leads, observed=np.ones((len(LEAD_ORDER), n), dtype=bool))
    return record, SynthTruth(r_positions=r_positions, lead_gains=gains,
                              rr_seconds=rr)


def apply_observation_mask(record: EcgRecord, layout: LayoutSpec) -> EcgRecord:
    """Mark only the samples a page in this layout would display as observed.

    Values are kept everywhere (the record is the ground truth); consumers
    training or evaluating completion read the mask to know what a digitizer
    would have seen.
    """
    masked = record.copy()
    masked.observed = np.zeros_like(record.observed)
    wp = layout.window_points
    for (band, window), lead in layout.lead_grid.items():
        i = LEAD_INDEX[lead]
        masked.observed[i, window * wp:(window + 1) * wp] = True
    for lead in layout.rhythm_leads:
        masked.observed[LEAD_INDEX[lead]] = True
    return masked
